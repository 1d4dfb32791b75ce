from operator import add
from typing import Annotated, Optional

from typing_extensions import TypedDict

from imagecore.image import DeformationField, Image


class RestoreState(TypedDict, total=False):
    # inputs
    i_f_path: str                                   # identity-preserving image I_F
    i_g_path: str                                   # texture prior I_G
    dam_path: str                                   # stage-1 checkpoint
    tgrn_path: Optional[str]                        # stage-2 checkpoint; absent for alignment only

    # requested outputs
    out_path: Optional[str]                         # restored image
    out_field_path: Optional[str]                   # DFLD field
    out_warp_path: Optional[str]                    # I_warp

    # intermediate results, unit range
    i_f: Image
    i_g: Image
    field: DeformationField
    i_warp: Image
    i_out: Image

    written: Annotated[list[str], add]              # paths emitted by the writer
    next: str                                       # routing key after alignment
