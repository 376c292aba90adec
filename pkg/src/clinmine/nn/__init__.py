"""Minimal 64-bit neural substrate with hand-derived backward passes."""

from .gradcheck import GradCheckReport, grad_check, relative_error
from .layers import (BiLSTM, CharCNN, Dense, Dropout, Embedding, LSTM, bilstm,
                     char_conv_maxpool, sigmoid)
from .losses import softmax, softmax_xent
from .optim import AdamState, adam_step
from .params import ModelFileError, Parameter, glorot_uniform, load_parameters, save_parameters

__all__ = [
    "AdamState", "BiLSTM", "CharCNN", "Dense", "Dropout", "Embedding", "GradCheckReport", "LSTM",
    "ModelFileError", "Parameter", "adam_step", "bilstm", "char_conv_maxpool", "glorot_uniform",
    "grad_check", "load_parameters", "relative_error", "save_parameters", "sigmoid", "softmax",
    "softmax_xent",
]
