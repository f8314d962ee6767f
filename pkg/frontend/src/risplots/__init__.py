from .render import PlotSpec, SchemaError, build, load_spec, render

__all__ = ["PlotSpec", "SchemaError", "build", "load_spec", "render"]
