"""Field widths shared by the engine and the wire-size/cost models."""

ID_BYTES = 4
KEY_BYTES = 8
MAC_BYTES = 10
SN_BYTES = 4
SNV_BYTES = 10
FLAG_BYTES = 1

# Width of F's output; keys and chain values share it
HASH_BYTES = 8

# SNV on the wire: chain value plus a 2-byte index
SNV_INDEX_BYTES = SNV_BYTES - HASH_BYTES

DEFAULT_MAX_GAP = 4
