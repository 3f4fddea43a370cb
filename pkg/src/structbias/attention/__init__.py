"""Structure-biased attention, a small numpy seq2seq model and decoding."""

from structbias.attention.bias import BiasTable, ClipBounds, bias_matrix_dec, bias_matrix_enc
from structbias.attention.model import ModelConfig, Sample, Seq2Seq, Vocab, make_batch

__all__ = ["BiasTable", "ClipBounds", "bias_matrix_dec", "bias_matrix_enc",
           "ModelConfig", "Sample", "Seq2Seq", "Vocab", "make_batch"]
