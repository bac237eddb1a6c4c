from .app import RunView, ViewState, list_experiments, load_run, render

__all__ = ["RunView", "ViewState", "list_experiments", "load_run", "render"]
