from config.settings import get_logger
from imagecore.image import check_same_shape
from imagecore.io import load_image
from state import RestoreState

logger = get_logger(__name__)


def load_inputs(state: RestoreState) -> dict:
    """Read I_F and I_G; both must have the same dimensions"""
    i_f = load_image(state["i_f_path"], "unit")
    i_g = load_image(state["i_g_path"], "unit")
    check_same_shape(i_f, i_g, "I_F and I_G")
    logger.debug("Loaded %s and %s (%d×%d)", state["i_f_path"], state["i_g_path"], i_f.height, i_f.width)
    return {"i_f": i_f, "i_g": i_g}
