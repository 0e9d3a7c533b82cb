"""Reference decoders: syndrome BP, BP+OSD and a Tanner-graph GNN."""
from .bp import BpConfig, BpResult, CssBpDecoder, bp_decode
from .osd import OsdConfig, OsdDecoder, osd_postprocess
from .tanner import TannerGraph

__all__ = ["BpConfig", "BpResult", "CssBpDecoder", "bp_decode", "OsdConfig", "OsdDecoder",
           "osd_postprocess", "TannerGraph"]
