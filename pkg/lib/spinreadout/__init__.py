"""
Spin readout
============

Simulation and classification toolkit for noisy single-shot spin readout
traces: random telegraph simulation, noise injection, thresholding, Haar
wavelet and CNN+LSTM classifiers, and spin-relaxation (T1) experiments.
"""
__version__ = '1.0.0'
