"""Model compression: pruning, quantization, Huffman coding, file container."""
from .container import CompressionReport, LoadedModel, compress, inspect_bytes, load, save, save_raw
from .huffman import (HuffmanTable, entropy_bits, frequencies_of, huffman_build, huffman_decode,
                      huffman_encode, mean_code_length)
from .quantize import (PruneMask, QuantTensor, dequantize, dequantize_params, is_prunable, prune_global,
                       prune_quantize, quantize, quantize_params)
