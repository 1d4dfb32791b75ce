from pathlib import Path

from config.settings import get_logger
from imagecore.io import save_field, save_image
from state import RestoreState
from utils.file_manager import ensure_dir

logger = get_logger(__name__)


def _target(path: str) -> str:
    ensure_dir(Path(path).parent)
    return path


def writer(state: RestoreState) -> dict:
    """Write whichever outputs were requested, creating parent directories"""
    written = []
    if state.get("out_path") and "i_out" in state:
        save_image(state["i_out"], _target(state["out_path"]))
        written.append(state["out_path"])
    if state.get("out_field_path"):
        save_field(state["field"], _target(state["out_field_path"]))
        written.append(state["out_field_path"])
    if state.get("out_warp_path"):
        save_image(state["i_warp"], _target(state["out_warp_path"]))
        written.append(state["out_warp_path"])
    for path in written:
        logger.info("Wrote %s", path)
    return {"written": written}
