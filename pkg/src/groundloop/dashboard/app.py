"""
Read-only viewer for experiment output directories.

Launch with ``groundloop dashboard --out runs`` (or ``streamlit run`` on this
file). The selected run directory and experiment live in session state and are
mirrored to the ``run`` and ``exp`` query params, so a view can be shared by URL.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import streamlit as st

from groundloop.cli.report import ReportFormat, ReportRow, load_rows, load_table
from groundloop.config import SNAPSHOT_NAME
from groundloop.errors import ConfigError, IoError, ReportError
from groundloop.utils.config_file import read_config_file

logger = logging.getLogger(__name__)

SESSION_STATE_KEY = "__groundloop_dashboard__"
TRAJECTORY_GLOB = "trajectory_*.tsv"


@dataclass(frozen=True)
class RunView:
    """Everything one experiment directory holds, parsed."""

    name: str
    rows: Tuple[ReportRow, ...]
    trajectories: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    config: Dict[str, str] = field(default_factory=dict)


def list_experiments(run_dir: Path) -> List[str]:
    """Subdirectories of ``run_dir`` that contain a rows table, sorted by name."""

    table = f"rows{ReportFormat.DELIMITED_TABLE.suffix}"
    if not run_dir.is_dir():
        return []
    return sorted(p.name for p in run_dir.iterdir() if (p / table).is_file())


def load_run(directory: Path) -> RunView:
    """
    :raises ReportError: When the directory has no readable rows table.
    """

    directory = Path(directory)
    rows_path = directory / f"rows{ReportFormat.DELIMITED_TABLE.suffix}"
    if not rows_path.is_file():
        raise IoError(rows_path, FileNotFoundError("no rows table"))

    trajectories = {}
    for path in sorted(directory.glob(TRAJECTORY_GLOB)):
        # trajectory_<label>_<seed>.tsv
        trajectories[path.stem[len("trajectory_"):]] = load_table(path)

    snapshot = directory / SNAPSHOT_NAME
    config = read_config_file(snapshot) if snapshot.is_file() else {}

    return RunView(directory.name, tuple(load_rows(rows_path)), trajectories, config)


class ViewState:
    """
    The two selections of the page, kept in ``st.session_state`` and synced to
    ``st.query_params``. A value present in the URL wins on first read.
    """

    URL_KEYS = {"run_dir": "run", "experiment": "exp"}

    @classmethod
    def _ns(cls) -> Dict[str, Any]:
        if SESSION_STATE_KEY not in st.session_state:
            st.session_state[SESSION_STATE_KEY] = {}
        return st.session_state[SESSION_STATE_KEY]

    @classmethod
    def get(cls, name: str, default: Optional[str] = None) -> Optional[str]:
        ns = cls._ns()
        if name in ns:
            return ns[name]

        url_key = cls.URL_KEYS[name]
        value = st.query_params[url_key] if url_key in st.query_params else default
        ns[name] = value
        return value

    @classmethod
    def set(cls, name: str, value: Optional[str]) -> None:
        cls._ns()[name] = value

        url_key = cls.URL_KEYS[name]
        if value is None or value == "":
            if url_key in st.query_params:
                del st.query_params[url_key]
            return
        st.query_params[url_key] = value


def _trajectory_table(records: List[Dict[str, Any]]) -> Dict[str, List[Any]]:
    columns: Dict[str, List[Any]] = {}
    for record in records:
        for key, value in record.items():
            columns.setdefault(key, []).append(value)
    return columns


def _rows_table(rows: Tuple[ReportRow, ...]) -> List[Dict[str, Any]]:
    table = []
    for row in rows:
        entry = {"label": row.label, "gamma_mean": row.gamma_mean, "gamma_std": row.gamma_std, "h_mean": row.h_mean, "h_std": row.h_std}
        entry.update(row.extra)
        table.append(entry)
    return table


def render(default_run_dir: str = "runs") -> None:
    st.title("groundloop runs")

    run_dir = st.text_input("Run directory", value=ViewState.get("run_dir", default_run_dir))
    if run_dir != ViewState.get("run_dir"):
        ViewState.set("run_dir", run_dir)
        ViewState.set("experiment", None)

    experiments = list_experiments(Path(run_dir))
    if not experiments:
        st.info(f"No experiments found under {run_dir}")
        return

    current = ViewState.get("experiment")
    index = experiments.index(current) if current in experiments else 0
    chosen = st.selectbox("Experiment", experiments, index=index)
    if chosen != current:
        ViewState.set("experiment", chosen)

    try:
        view = load_run(Path(run_dir) / chosen)
    except (ReportError, ConfigError) as e:
        logger.error(f"Cannot load run {chosen}: {e}")
        st.error(str(e))
        return

    st.subheader("Report rows")
    st.dataframe(_rows_table(view.rows))

    if view.trajectories:
        st.subheader("Trajectories")
        label = st.selectbox("Trajectory", sorted(view.trajectories))
        st.dataframe(_trajectory_table(view.trajectories[label]))

    if view.config:
        with st.expander("Configuration snapshot"):
            st.code("\n".join(f"{k} = {v}" for k, v in view.config.items()))


def _default_out(argv: List[str]) -> str:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--out", default="runs")
    args, _ = parser.parse_known_args(argv)
    return args.out


if __name__ == "__main__":
    render(_default_out(sys.argv[1:]))
