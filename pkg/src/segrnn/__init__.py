"""Segmental RNN: a BiLSTM encoder with hierarchical subsampling feeding a
zeroth-order semi-Markov CRF, trained by conditional maximum likelihood with
a small reverse-mode autodiff engine written on top of numpy."""

__version__ = "0.1.0"
