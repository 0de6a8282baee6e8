"""OFDM baseband modem: Gray QAM mapping, pilots, orthogonal training, unitary DFT pair.

Bit-to-symbol map
-----------------
Square ``Q``-QAM, ``b = log2(Q)`` bits per symbol.  The first ``b/2`` bits
select the in-phase level and the last ``b/2`` the quadrature level, each
Gray-coded over the ``sqrt(Q)`` PAM levels ``-(sqrt(Q)-1), ..., sqrt(Q)-1``
(level index ``i`` carries the Gray code ``i ^ (i >> 1)``).  Points are
scaled to unit average power.  For QPSK this gives::

    bits  symbol
    00    (-1 - 1j) / sqrt(2)
    01    (-1 + 1j) / sqrt(2)
    10    (+1 - 1j) / sqrt(2)
    11    (+1 + 1j) / sqrt(2)

Training and pilots
-------------------
Training symbols carry a fixed +-1 base sequence (a maximum-length sequence)
on every subcarrier, multiplied across the training block by one row of a
Sylvester-Hadamard matrix.  Transmitters using different rows are exactly
orthogonal over the block, which is what the LS channel estimator relies on.
The same row index also covers the pilot values across the pilot set, so two
nodes sharing pilot positions do not leak into each other's CPE estimate on
a flat channel.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import hadamard
from scipy.signal import max_len_seq

from ._validation import check_complex_array, check_count, check_index_set, check_rng

__all__ = [
    "FrameConfig",
    "OfdmFrame",
    "build_frame",
    "modulate",
    "demodulate",
    "qam_map",
    "qam_constellation",
    "training_sequence",
    "pilot_cover",
    "default_pilots",
]


def default_pilots(n_fft=64):
    """WLAN-style pilots at offsets -21, -7, 7, 21 (scaled to ``n_fft``), in FFT order."""
    offsets = np.round(np.array([-21, -7, 7, 21]) * n_fft / 64).astype(int)
    return tuple(sorted(int(o) % n_fft for o in offsets))


@dataclass(frozen=True)
class FrameConfig:
    n_fft: int = 64
    pilot_set: tuple = None
    n_training: int = 4
    n_data: int = 10
    cp_len: int = None
    qam_order: int = 16
    pilot_values: tuple = (1.0, 1.0, 1.0, -1.0)

    def __post_init__(self):
        check_count(self.n_fft, "n_fft", minimum=2)
        if self.pilot_set is None:
            object.__setattr__(self, "pilot_set", default_pilots(self.n_fft))
        pilots = check_index_set(self.pilot_set, self.n_fft, "pilot_set")
        object.__setattr__(self, "pilot_set", tuple(int(p) for p in pilots))
        if self.cp_len is None:
            object.__setattr__(self, "cp_len", self.n_fft // 4)
        check_count(self.cp_len, "cp_len", minimum=0)
        n_tr = check_count(self.n_training, "n_training", minimum=0)
        if n_tr and n_tr & (n_tr - 1):
            raise ValueError(f"n_training must be a power of two, got {n_tr}")
        check_count(self.n_data, "n_data", minimum=0)
        if self.qam_order not in (4, 16, 64, 256):
            raise ValueError(f"qam_order must be a square power of 4, got {self.qam_order}")
        if len(self.pilot_values) != len(self.pilot_set):
            vals = np.resize(np.asarray(self.pilot_values, dtype=float), len(self.pilot_set))
            object.__setattr__(self, "pilot_values", tuple(vals))

    @property
    def n_symbols(self):
        return self.n_training + self.n_data

    @property
    def symbol_len(self):
        return self.n_fft + self.cp_len

    @property
    def n_samples(self):
        return self.n_symbols * self.symbol_len

    @property
    def bits_per_symbol(self):
        return int(np.log2(self.qam_order))

    @property
    def data_carriers(self):
        mask = np.ones(self.n_fft, dtype=bool)
        mask[list(self.pilot_set)] = False
        return np.flatnonzero(mask)

    @property
    def payload_capacity(self):
        return self.n_data * self.data_carriers.size * self.bits_per_symbol


@dataclass(frozen=True)
class OfdmFrame:
    config: FrameConfig
    freq_symbols: np.ndarray
    time_samples: np.ndarray
    pilot_values: np.ndarray
    bits: np.ndarray = field(repr=False)

    @property
    def training(self):
        return self.freq_symbols[: self.config.n_training]

    @property
    def data(self):
        return self.freq_symbols[self.config.n_training :]

    def scaled(self, gain):
        return OfdmFrame(self.config, self.freq_symbols * gain, self.time_samples * gain,
                         self.pilot_values * gain, self.bits)


def qam_constellation(order):
    """Gray-labelled unit-power constellation; entry ``i`` is the symbol for label ``i``."""
    half = int(np.log2(order)) // 2
    side = 1 << half
    labels = np.arange(order)
    # PAM position whose Gray code equals the label bits
    position = np.empty(side, dtype=int)
    position[np.arange(side) ^ (np.arange(side) >> 1)] = np.arange(side)
    pam = 2 * position - (side - 1)
    points = pam[labels >> half] + 1j * pam[labels & (side - 1)]
    return points / np.sqrt(2.0 * (order - 1) / 3.0)


def qam_map(bits, order):
    """Map a 0/1 bit vector (MSB first per symbol) to constellation points."""
    bps = int(np.log2(order))
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % bps:
        raise ValueError(f"bit count {bits.size} is not a multiple of {bps}")
    labels = bits.reshape(-1, bps) @ (1 << np.arange(bps - 1, -1, -1))
    return qam_constellation(order)[labels]


def training_sequence(n_fft):
    """Fixed +-1 base sequence used on every training subcarrier."""
    nbits = max(2, int(np.ceil(np.log2(n_fft + 1))))
    seq = max_len_seq(nbits, state=np.ones(nbits, dtype=np.int8))[0]
    return 1.0 - 2.0 * np.resize(seq, n_fft)


def modulate(freq_symbols, cp_len=0):
    """Unitary IDFT of each row followed by cyclic-prefix insertion, serialised."""
    x = check_complex_array(freq_symbols, "freq_symbols", ndim=(1, 2))
    rows = np.atleast_2d(x)
    n = rows.shape[1]
    if not 0 <= cp_len <= n:
        raise ValueError(f"cp_len must be in [0, {n}], got {cp_len}")
    t = np.fft.ifft(rows, axis=1) * np.sqrt(n)
    t = np.concatenate([t[:, n - cp_len :], t], axis=1)
    return t.ravel()


def demodulate(time_samples, cfg):
    """Inverse of :func:`modulate`: strip the CP and take the unitary DFT of each symbol."""
    y = check_complex_array(time_samples, "time_samples", ndim=1)
    if y.size % cfg.symbol_len:
        raise ValueError(f"{y.size} samples is not a whole number of {cfg.symbol_len}-sample symbols")
    blocks = y.reshape(-1, cfg.symbol_len)[:, cfg.cp_len :]
    return np.fft.fft(blocks, axis=1) / np.sqrt(cfg.n_fft)


def pilot_cover(n_pilots, row):
    """Row ``row`` of the smallest Sylvester-Hadamard matrix with at least ``n_pilots`` columns."""
    size = 1 << max(0, int(np.ceil(np.log2(max(n_pilots, 1)))))
    if not 0 <= row < size:
        raise ValueError(f"cover row must be in [0, {size}), got {row}")
    return hadamard(size)[row, :n_pilots]


def build_frame(cfg, payload_bits=None, seed=None, cover_row=0):
    """Assemble training + data symbols for one transmitter.

    ``payload_bits`` fills the data carriers in order; any remaining capacity
    is filled with random bits drawn from ``seed``.  ``cover_row`` picks the
    Hadamard cover of the training block and of the pilot values, so two
    transmitters with different rows have orthogonal training and pilots.
    """
    rng = check_rng(seed)
    cap = cfg.payload_capacity
    payload = np.zeros(0, dtype=np.int8) if payload_bits is None else np.asarray(payload_bits, dtype=np.int8).ravel()
    if payload.size > cap:
        raise ValueError(f"payload of {payload.size} bits overflows frame capacity {cap}")
    if np.any((payload != 0) & (payload != 1)):
        raise ValueError("payload_bits must be 0/1")
    bits = np.concatenate([payload, rng.integers(0, 2, cap - payload.size, dtype=np.int8)])

    symbols = np.zeros((cfg.n_symbols, cfg.n_fft), dtype=complex)
    if cfg.n_training:
        if not 0 <= cover_row < cfg.n_training:
            raise ValueError(f"cover_row must be in [0, {cfg.n_training})")
        cover = hadamard(cfg.n_training)[cover_row]
        symbols[: cfg.n_training] = cover[:, None] * training_sequence(cfg.n_fft)[None, :]
    pilots = np.asarray(cfg.pilot_values, dtype=complex) * pilot_cover(len(cfg.pilot_set), cover_row)
    if cfg.n_data:
        data = qam_map(bits, cfg.qam_order).reshape(cfg.n_data, -1)
        block = symbols[cfg.n_training :]
        block[:, cfg.data_carriers] = data
        block[:, list(cfg.pilot_set)] = pilots
    time = modulate(symbols, cfg.cp_len)
    return OfdmFrame(cfg, symbols, time, pilots, bits)
