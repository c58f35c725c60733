from .emb_file import PairingManifest, load_pair, read_emb, write_emb
from .synth import SynthConfig, synth_bipartite
from .tables import emit, render_table

__all__ = [
    "PairingManifest",
    "SynthConfig",
    "emit",
    "load_pair",
    "read_emb",
    "render_table",
    "synth_bipartite",
    "write_emb",
]
