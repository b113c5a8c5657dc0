"""
Gesture recognition with a bank of discrete left-to-right HMM chains.

Each frame of a gesture becomes one observation symbol: a motion direction
(0..3) when the hand moved, otherwise the intermediate pose the still hand
was classified as (4..S-1). One chain per gesture is trained with
Baum-Welch and a sequence is assigned to the chain with the highest forward
log-likelihood, unless its per-symbol average falls below the bank's
rejection threshold.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import (Dict, Generator, Generic, Iterable, Iterator, List, Mapping, Optional,
                    Sequence, Tuple, TypeVar, Union)

import numpy as np

from .errors import HmmError, ModelFormatError, UnknownSymbolError
from .hand_tracker import Direction

logger = logging.getLogger(__name__)

WRONG_GESTURE = "WRONG"
MOTION_SYMBOLS = len(Direction)
STOCHASTIC_TOLERANCE = 1e-9
DEFAULT_FLOOR = 1e-6
DEFAULT_MAX_ITER = 200
DEFAULT_TOL = 1e-6
DEFAULT_REJECT_MARGIN = 2.0
HINT_WEIGHT = 0.5


# ===== Symbols =====

@dataclass(frozen=True)
class SymbolTable:
    """Motion symbols 0..3 followed by one symbol per intermediate pose."""

    poses: Tuple[str, ...]

    def __post_init__(self):
        poses = tuple(self.poses)
        if len(set(poses)) != len(poses):
            raise HmmError("pose labels in a symbol table must be unique")
        clashes = {p for p in poses if p.lower() in {d.label for d in Direction}}
        if clashes:
            raise HmmError(f"pose labels clash with motion names: {sorted(clashes)}")
        object.__setattr__(self, "poses", poses)

    @property
    def size(self) -> int:
        return MOTION_SYMBOLS + len(self.poses)

    def pose_symbol(self, label: str) -> int:
        try:
            return MOTION_SYMBOLS + self.poses.index(label)
        except ValueError:
            raise UnknownSymbolError(f"pose {label!r} is not in the symbol table") from None

    @staticmethod
    def motion_symbol(direction: Direction) -> int:
        return int(direction)

    def symbol_for(self, label: Union[str, int]) -> int:
        """Resolve a symbol given as an integer, a motion name or a pose label."""
        if isinstance(label, (int, np.integer)):
            if not 0 <= int(label) < self.size:
                raise UnknownSymbolError(f"symbol {label} outside 0..{self.size - 1}")
            return int(label)
        try:
            return int(Direction.parse(label))
        except ValueError:
            return self.pose_symbol(label)

    def label_of(self, symbol: int) -> str:
        if 0 <= symbol < MOTION_SYMBOLS:
            return Direction(symbol).label
        if MOTION_SYMBOLS <= symbol < self.size:
            return self.poses[symbol - MOTION_SYMBOLS]
        raise UnknownSymbolError(f"symbol {symbol} outside 0..{self.size - 1}")


@dataclass(frozen=True)
class FrameTuple:
    """The observable content of one hand-present frame: a still pose or a motion."""

    pose: Optional[str] = None
    motion: Optional[Direction] = None

    def __post_init__(self):
        if (self.pose is None) == (self.motion is None):
            raise ValueError("exactly one of pose and motion must be set")

    @classmethod
    def still(cls, pose: str) -> "FrameTuple":
        return cls(pose=pose)

    @classmethod
    def moving(cls, direction: Direction) -> "FrameTuple":
        return cls(motion=direction)

    def __str__(self):
        if self.motion is not None:
            return f"motion {self.motion.label}"
        return f"pose {self.pose}"


def encode(tuples: Iterable[FrameTuple], table: SymbolTable) -> List[int]:
    symbols = []
    for item in tuples:
        if item.motion is not None:
            symbols.append(table.motion_symbol(item.motion))
        else:
            symbols.append(table.pose_symbol(item.pose))
    return symbols


def decode(symbols: Iterable[int], table: SymbolTable) -> List[FrameTuple]:
    out = []
    for symbol in symbols:
        if 0 <= symbol < MOTION_SYMBOLS:
            out.append(FrameTuple.moving(Direction(symbol)))
        else:
            out.append(FrameTuple.still(table.label_of(symbol)))
    return out


# ===== Chains =====

def transition_mask(n: int) -> np.ndarray:
    """Entries a left-to-right chain may use: self loop and advance by one."""
    return np.eye(n, dtype=bool) | np.eye(n, k=1, dtype=bool)


@dataclass(frozen=True, eq=False)
class HmmChain:
    name: str
    pi: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=np.float64)
        A = np.array(self.A, dtype=np.float64)
        B = np.array(self.B, dtype=np.float64)
        n = len(pi)
        if n < 1 or pi.ndim != 1:
            raise HmmError(f"chain {self.name!r}: pi must be a non-empty vector")
        if A.shape != (n, n) or B.ndim != 2 or B.shape[0] != n:
            raise HmmError(f"chain {self.name!r}: inconsistent shapes pi={pi.shape} A={A.shape} B={B.shape}")
        for arr, what in ((pi[None, :], "pi"), (A, "A"), (B, "B")):
            if (arr < 0).any() or not np.all(np.abs(arr.sum(axis=1) - 1.0) <= STOCHASTIC_TOLERANCE):
                raise HmmError(f"chain {self.name!r}: {what} rows must be stochastic")
        if pi[0] != 1.0:
            raise HmmError(f"chain {self.name!r}: a left-to-right chain starts in state 0")
        if (A[~transition_mask(n)] != 0).any():
            raise HmmError(f"chain {self.name!r}: transitions outside the left-to-right pattern")
        for arr in (pi, A, B):
            arr.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return len(self.pi)

    @property
    def n_symbols(self) -> int:
        return self.B.shape[1]


Hint = Tuple[int, Union[str, int]]


def init_chain(name: str, n_states: int, table: SymbolTable,
               hints: Optional[Sequence[Hint]] = None) -> HmmChain:
    """
    Initial parameters: start in state 0, each state stays or advances with
    equal probability and emits uniformly. A hint (state, symbol) raises that
    symbol's emission to 0.5 in that state; several hints on one state share
    the 0.5 and the remaining mass is spread evenly over the other symbols.
    """
    if n_states < 1:
        raise HmmError(f"gesture {name!r}: a chain needs at least one state")
    S = table.size

    pi = np.zeros(n_states)
    pi[0] = 1.0
    A = np.zeros((n_states, n_states))
    for i in range(n_states - 1):
        A[i, i] = A[i, i + 1] = 0.5
    A[-1, -1] = 1.0

    hinted: Dict[int, set] = {}
    for state, label in hints or ():
        if not 0 <= state < n_states:
            raise HmmError(f"gesture {name!r}: hint for state {state} outside 0..{n_states - 1}")
        hinted.setdefault(state, set()).add(table.symbol_for(label))

    B = np.full((n_states, S), 1.0 / S)
    for state, symbols in hinted.items():
        symbols = sorted(symbols)
        rest = S - len(symbols)
        if rest == 0:
            continue
        B[state, :] = (1.0 - HINT_WEIGHT) / rest
        B[state, symbols] = HINT_WEIGHT / len(symbols)
    return HmmChain(name, pi, A, B)


# ===== Forward / backward =====

def _check_observations(chain: HmmChain, obs) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.int64)
    if obs.ndim != 1 or len(obs) == 0:
        raise HmmError("observation sequence must be non-empty")
    if obs.min() < 0 or obs.max() >= chain.n_symbols:
        raise UnknownSymbolError(f"observation symbol outside 0..{chain.n_symbols - 1}")
    return obs


def _forward(chain: HmmChain, obs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Scaled forward pass; a zero scale factor marks an impossible prefix and ends the pass."""
    T, n = len(obs), chain.n
    alpha = np.zeros((T, n))
    scales = np.zeros(T)
    a = chain.pi * chain.B[:, obs[0]]
    for t in range(T):
        if t > 0:
            a = (alpha[t - 1] @ chain.A) * chain.B[:, obs[t]]
        c = a.sum()
        if c <= 0.0:
            return alpha, scales
        scales[t] = c
        alpha[t] = a / c
    return alpha, scales


def _log_likelihood(scales: np.ndarray) -> float:
    if (scales <= 0.0).any():
        return -math.inf
    return float(np.log(scales).sum())


def forward_log_likelihood(chain: HmmChain, obs) -> float:
    """log P(obs | chain), or -inf for an impossible sequence."""
    obs = _check_observations(chain, obs)
    _, scales = _forward(chain, obs)
    return _log_likelihood(scales)


def _backward(chain: HmmChain, obs: np.ndarray, scales: np.ndarray) -> np.ndarray:
    T, n = len(obs), chain.n
    beta = np.ones((T, n))
    for t in range(T - 2, -1, -1):
        beta[t] = chain.A @ (chain.B[:, obs[t + 1]] * beta[t + 1]) / scales[t + 1]
    return beta


def _expected_counts(chain: HmmChain, sequences: Sequence[np.ndarray]):
    """E-step over all sequences: total log-likelihood plus expected transition and emission counts."""
    trans = np.zeros((chain.n, chain.n))
    emit = np.zeros((chain.n, chain.n_symbols))
    total = 0.0
    used = 0
    for obs in sequences:
        alpha, scales = _forward(chain, obs)
        loglik = _log_likelihood(scales)
        if not math.isfinite(loglik):
            logger.warning(f"Chain {chain.name!r}: skipping a training sequence with zero likelihood")
            continue
        beta = _backward(chain, obs, scales)
        gamma = alpha * beta
        np.add.at(emit.T, obs, gamma)
        if len(obs) > 1:
            weighted = chain.B[:, obs[1:]].T * beta[1:] / scales[1:, None]
            trans += chain.A * (alpha[:-1].T @ weighted)
        total += loglik
        used += 1
    if used == 0:
        raise HmmError(f"chain {chain.name!r}: no training sequence has non-zero likelihood")
    return total, trans, emit


def _floored_row(counts: np.ndarray, allowed: np.ndarray, floor: float) -> np.ndarray:
    """
    Maximise sum(counts * log p) over allowed entries subject to p >= floor and
    sum(p) = 1. Entries whose share would fall under the floor are pinned to
    it and the rest of the mass is shared in proportion to the counts.
    """
    row = np.zeros_like(counts)
    idx = np.flatnonzero(allowed)
    if len(idx) == 1:
        row[idx] = 1.0
        return row
    c = counts[idx]
    pinned = np.zeros(len(idx), dtype=bool)
    while True:
        free_total = c[~pinned].sum()
        mass = 1.0 - floor * pinned.sum()
        p = np.where(pinned, floor, 0.0)
        if free_total > 0:
            p[~pinned] = mass * c[~pinned] / free_total
        newly = (~pinned) & (p < floor)
        if not newly.any():
            break
        pinned |= newly
    row[idx] = p
    return row


def _reestimate(chain: HmmChain, trans: np.ndarray, emit: np.ndarray, floor: float) -> HmmChain:
    mask = transition_mask(chain.n)
    A = np.array(chain.A)
    B = np.array(chain.B)
    every_symbol = np.ones(chain.n_symbols, dtype=bool)
    for i in range(chain.n):
        # rows without evidence keep their previous values
        if trans[i][mask[i]].sum() > 0:
            A[i] = _floored_row(trans[i], mask[i], floor)
        if emit[i].sum() > 0:
            B[i] = _floored_row(emit[i], every_symbol, floor)
    return HmmChain(chain.name, chain.pi, A, B)


def baum_welch_iterations(chain: HmmChain, sequences: Sequence[Sequence[int]],
                          floor: float = DEFAULT_FLOOR) -> Generator[Tuple[HmmChain, float], None, None]:
    """Yield (chain, total log-likelihood) for the starting chain and after every re-estimation."""
    if not sequences:
        raise HmmError(f"chain {chain.name!r}: empty training set")
    if floor * chain.n_symbols >= 1.0:
        raise HmmError(f"emission floor {floor} is too large for {chain.n_symbols} symbols")
    seqs = [_check_observations(chain, s) for s in sequences]
    current = chain
    while True:
        total, trans, emit = _expected_counts(current, seqs)
        yield current, total
        current = _reestimate(current, trans, emit, floor)


def baum_welch_train(chain: HmmChain, sequences: Sequence[Sequence[int]], max_iter: int = DEFAULT_MAX_ITER,
                     tol: float = DEFAULT_TOL, floor: float = DEFAULT_FLOOR) -> HmmChain:
    previous = None
    trained = chain
    for iteration, (trained, total) in enumerate(baum_welch_iterations(chain, sequences, floor)):
        if previous is not None and total - previous < tol:
            logger.debug(f"Chain {chain.name!r} converged after {iteration} iterations: loglik={total:.6f}")
            break
        if iteration >= max_iter:
            logger.debug(f"Chain {chain.name!r} stopped at max_iter={max_iter}: loglik={total:.6f}")
            break
        previous = total
    return trained


# ===== Bank and classification =====

@dataclass(frozen=True)
class GestureBank:
    chains: Tuple[HmmChain, ...]
    symbols: SymbolTable
    reject_threshold: float = -math.inf

    def __post_init__(self):
        chains = tuple(self.chains)
        if not chains:
            raise HmmError("a gesture bank needs at least one chain")
        names = [c.name for c in chains]
        if len(set(names)) != len(names):
            raise HmmError("gesture names in a bank must be unique")
        for c in chains:
            if c.n_symbols != self.symbols.size:
                raise HmmError(f"chain {c.name!r} has {c.n_symbols} symbols, table has {self.symbols.size}")
        object.__setattr__(self, "chains", chains)

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.chains]

    def chain(self, name: str) -> HmmChain:
        for c in self.chains:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass(frozen=True)
class GestureDecision:
    label: str
    scores: Dict[str, float]
    avg_loglik: float

    @property
    def rejected(self) -> bool:
        return self.label == WRONG_GESTURE


def classify_gesture(bank: GestureBank, obs: Sequence[int]) -> GestureDecision:
    """Best-scoring chain, or WRONG when its per-symbol log-likelihood is under the bank threshold."""
    scores = {chain.name: forward_log_likelihood(chain, obs) for chain in bank.chains}
    # max keeps the first chain on equal scores
    best = max(bank.names, key=lambda name: scores[name])
    avg = scores[best] / len(obs)
    if not math.isfinite(avg) or avg < bank.reject_threshold:
        logger.debug(f"Rejected sequence of {len(obs)} symbols: best {best!r} avg={avg:.4f}")
        return GestureDecision(WRONG_GESTURE, scores, avg)
    return GestureDecision(best, scores, avg)


def calibrate_reject_threshold(chains: Iterable[HmmChain], training: Mapping[str, Sequence[Sequence[int]]],
                               margin: float = DEFAULT_REJECT_MARGIN) -> float:
    """Lowest per-symbol log-likelihood any chain gives its own training sequences, minus `margin`."""
    averages = []
    for chain in chains:
        for obs in training.get(chain.name, ()):
            score = forward_log_likelihood(chain, obs)
            if math.isfinite(score):
                averages.append(score / len(obs))
    if not averages:
        raise HmmError("cannot calibrate a rejection threshold without scorable training sequences")
    return min(averages) - margin


# ===== Temporal segmentation =====

Item = TypeVar("Item")


class GestureSegmenter(Generic[Item]):
    """
    Incremental hand-absence segmentation. `push(None)` marks an absent
    frame; a segment closes once `debounce` absent frames follow it. Absent
    frames never enter a segment.
    """

    def __init__(self, debounce: int = 3):
        if debounce < 1:
            raise ValueError("debounce must be >= 1")
        self.debounce = debounce
        self._current: List[Item] = []
        self._absent_run = 0

    @property
    def is_open(self) -> bool:
        return bool(self._current)

    def push(self, item: Optional[Item]) -> Optional[List[Item]]:
        if item is not None:
            self._current.append(item)
            self._absent_run = 0
            return None
        if not self._current:
            return None
        self._absent_run += 1
        if self._absent_run >= self.debounce:
            return self.flush()
        return None

    def flush(self) -> Optional[List[Item]]:
        segment = self._current
        self._current = []
        self._absent_run = 0
        return segment or None


def segment_stream(events: Iterable[Optional[Item]], debounce: int = 3) -> Iterator[List[Item]]:
    segmenter: GestureSegmenter[Item] = GestureSegmenter(debounce)
    for event in events:
        segment = segmenter.push(event)
        if segment:
            yield segment
    tail = segmenter.flush()
    if tail:
        yield tail


# ===== Gesture definitions =====

@dataclass(frozen=True)
class GestureDefinition:
    name: str
    states: int
    hints: Tuple[Hint, ...] = ()


@dataclass(frozen=True)
class GestureDefinitions:
    gestures: Tuple[GestureDefinition, ...]
    poses: Optional[Tuple[str, ...]] = None

    @property
    def names(self) -> List[str]:
        return [g.name for g in self.gestures]

    def symbol_table(self, fallback_poses: Optional[Sequence[str]] = None) -> SymbolTable:
        poses = self.poses if self.poses is not None else fallback_poses
        if poses is None:
            raise HmmError("no pose order: add a `poses` line or supply intermediate pose labels")
        return SymbolTable(tuple(poses))


def parse_gesture_definitions(path) -> GestureDefinitions:
    """
    Read a gesture definition file::

        poses Thumbs_Up Sun_Up Fist
        gesture Good Afternoon states=3
        hint 0 Thumbs_Up
        hint 1 up
    """
    path = Path(path)
    gestures: List[GestureDefinition] = []
    poses = None
    current = None
    hints: List[Hint] = []

    def close():
        if current is not None:
            gestures.append(GestureDefinition(current[0], current[1], tuple(hints)))

    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            keyword, _, rest = line.partition(" ")
            if keyword == "poses":
                poses = tuple(rest.split())
            elif keyword == "gesture":
                name, _, states = rest.rpartition(" ")
                if not states.startswith("states=") or not name.strip():
                    raise ModelFormatError(path, line_no, "expected `gesture <name> states=<n>`")
                try:
                    n = int(states[len("states="):])
                except ValueError:
                    raise ModelFormatError(path, line_no, f"bad state count {states!r}") from None
                if n < 1:
                    raise ModelFormatError(path, line_no, "a gesture needs at least one state")
                close()
                current, hints = (name.strip(), n), []
            elif keyword == "hint":
                if current is None:
                    raise ModelFormatError(path, line_no, "hint before any gesture")
                state, _, label = rest.strip().partition(" ")
                if not state.isdigit() or not label.strip():
                    raise ModelFormatError(path, line_no, "expected `hint <state> <symbol>`")
                hints.append((int(state), label.strip()))
            else:
                raise ModelFormatError(path, line_no, f"unknown keyword {keyword!r}")
    close()

    if not gestures:
        raise ModelFormatError(path, 0, "no gestures defined")
    names = [g.name for g in gestures]
    if len(set(names)) != len(names):
        raise ModelFormatError(path, 0, "duplicate gesture names")
    logger.info(f"Loaded {len(gestures)} gesture definitions from {path}")
    return GestureDefinitions(tuple(gestures), poses)


def format_gesture_definitions(definitions: GestureDefinitions) -> str:
    lines = []
    if definitions.poses is not None:
        lines.append("poses " + " ".join(definitions.poses))
    for g in definitions.gestures:
        lines.append(f"gesture {g.name} states={g.states}")
        lines.extend(f"hint {state} {label}" for state, label in g.hints)
    return "\n".join(lines) + "\n"


def train_bank(definitions: GestureDefinitions, sequences: Mapping[str, Sequence[Sequence[int]]],
               table: SymbolTable, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL,
               floor: float = DEFAULT_FLOOR, reject_margin: float = DEFAULT_REJECT_MARGIN) -> GestureBank:
    """Train one chain per defined gesture and calibrate the bank's rejection threshold."""
    chains = []
    for definition in definitions.gestures:
        training = sequences.get(definition.name)
        if not training:
            raise HmmError(f"no training sequences for gesture {definition.name!r}")
        initial = init_chain(definition.name, definition.states, table, definition.hints)
        chains.append(baum_welch_train(initial, training, max_iter, tol, floor))
        logger.info(f"Trained chain {definition.name!r}: {definition.states} states, {len(training)} sequences")
    threshold = calibrate_reject_threshold(chains, sequences, reject_margin)
    logger.info(f"Gesture bank ready: {len(chains)} chains, reject threshold {threshold:.4f}")
    return GestureBank(tuple(chains), table, threshold)
