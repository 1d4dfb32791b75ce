from config.settings import get_logger
from dam.network import predict_field
from dam.warp import warp_image
from imagecore.image import convert_range
from state import RestoreState
from train.checkpoint import load_dam

logger = get_logger(__name__)


def aligner(state: RestoreState) -> dict:
    """Predict the field aligning I_G to I_F and warp I_G by it"""
    dam = load_dam(state["dam_path"])
    field = predict_field(dam.net, convert_range(state["i_f"], "signed"), convert_range(state["i_g"], "signed"))
    i_warp = warp_image(state["i_g"], field)
    logger.info("Aligned prior, max displacement %.3f px", field.max_magnitude())
    return {
        "field": field,
        "i_warp": i_warp,
        "next": "restorer" if state.get("tgrn_path") else "writer",
    }
