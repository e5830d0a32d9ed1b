"""Detector-side blocks: IRSA, DPCA-gated CLCF fusion, backbone and neck assembly."""
from .backbone import (
    NeckParams,
    PyramidFeatures,
    StageParams,
    backbone_forward,
    backbone_stages,
    init_backbone,
    init_neck,
    neck_fuse,
    neck_partners,
)
from .clcf import (
    CLCFFusion,
    ClcfParams,
    DpcaParams,
    clcf_fuse,
    clcf_grad_low,
    clcf_stages,
    dpca_gate,
    dpca_stages,
    gated_mix,
    init_clcf,
    init_dpca,
)
from .irsa import (
    DIRECTION_ORDER,
    DIRECTIONS,
    IRSABlock,
    IrsaParams,
    ShiftSpec,
    init_irsa,
    init_shift,
    irsa_forward,
    irsa_stages,
    shift_groups,
    shift_wise_conv,
)
