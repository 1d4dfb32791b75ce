from imagecore.image import convert_range
from state import RestoreState
from tgrn.network import restore_image
from train.checkpoint import load_tgrn


def restorer(state: RestoreState) -> dict:
    """Fuse I_F with the aligned prior through TGRN"""
    tgrn = load_tgrn(state["tgrn_path"])
    out = restore_image(tgrn.net, convert_range(state["i_f"], "signed"), convert_range(state["i_warp"], "signed"))
    return {"i_out": convert_range(out, "unit")}
