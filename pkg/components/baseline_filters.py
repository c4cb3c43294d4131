"""
Hardware-friendly reference denoisers: BAF, STCF and ONF.

Every filter checks support first and then stores the event, so an event never
supports itself. Supporting ages use a closed window: ``t - t_stored <= tau``.
"""

from concurrent.futures import ThreadPoolExecutor
from enum import Enum

import numpy as np

from components.dvs_events import Event, EventStream, Label, SensorGeometry
from components.eval_metrics import MetricsError, RocCurve, confusion
from utils.output import Output

out = Output(__name__)

DEFAULT_TAU_MIN_US = 100
DEFAULT_TAU_MAX_US = 1_000_000
DEFAULT_TAU_STEPS = 31


class BaselineFilter(str, Enum):
    BAF = "baf"
    STCF = "stcf"
    ONF = "onf"


class Sae:
    """
    Surface of active events, padded by one pixel on every side.

    Timestamps are stored as uint64 next to a written mask, so the whole unsigned
    timestamp range is usable and a never-fired pixel needs no sentinel value.
    """

    def __init__(self, geometry: SensorGeometry, polarity_split: bool = False):
        self.geometry = geometry
        self.polarity_split = polarity_split
        planes = 2 if polarity_split else 1
        shape = (planes, geometry.height + 2, geometry.width + 2)
        self._last_t = np.zeros(shape, dtype=np.uint64)
        self._written = np.zeros(shape, dtype=bool)

    def _unpadded(self, grid: np.ndarray) -> np.ndarray:
        view = grid[:, 1:-1, 1:-1]
        return view if self.polarity_split else view[0]

    @property
    def last_t(self) -> np.ndarray:
        """Unpadded H x W view (polarity-split: 2 x H x W); meaningful where ``written``."""
        return self._unpadded(self._last_t)

    @property
    def written(self) -> np.ndarray:
        return self._unpadded(self._written)

    def _plane(self, e: Event) -> int:
        return int(e.p) if self.polarity_split else 0

    def neighbour_ages(self, e: Event) -> np.ndarray:
        """Ages of the 8 neighbours in the 3x3 window, the centre pixel excluded."""
        plane = self._plane(e)
        rows, cols = slice(e.y, e.y + 3), slice(e.x, e.x + 3)
        neighbours = np.delete(self._last_t[plane, rows, cols].ravel(), 4)
        seen = np.delete(self._written[plane, rows, cols].ravel(), 4)
        ages = np.full(8, np.inf)
        # timestamps are nondecreasing, so the unsigned difference cannot wrap
        ages[seen] = (np.uint64(e.t) - neighbours[seen]).astype(np.float64)
        return ages

    def update(self, e: Event) -> None:
        self._last_t[self._plane(e), e.y + 1, e.x + 1] = e.t
        self._written[self._plane(e), e.y + 1, e.x + 1] = True


def _replace_slot(times: np.ndarray, seen: np.ndarray) -> int:
    """Empty slot first, else the older entry; slot 0 on equal timestamps."""
    if not seen.all():
        return int(np.argmin(seen))
    return int(np.argmin(times))


class OnfMemory:
    """Two (coordinate, timestamp) entries per row and per column."""

    def __init__(self, geometry: SensorGeometry):
        self.geometry = geometry
        self.row_x = np.zeros((geometry.height, 2), dtype=np.int64)
        self.row_t = np.zeros((geometry.height, 2), dtype=np.uint64)
        self.row_seen = np.zeros((geometry.height, 2), dtype=bool)
        self.col_y = np.zeros((geometry.width, 2), dtype=np.int64)
        self.col_t = np.zeros((geometry.width, 2), dtype=np.uint64)
        self.col_seen = np.zeros((geometry.width, 2), dtype=bool)

    def support_age(self, e: Event) -> float:
        """Age of the freshest stored entry adjacent to ``e`` in its row or column."""
        best = np.inf
        for coords, times, seen, own in (
            (self.row_x[e.y], self.row_t[e.y], self.row_seen[e.y], e.x),
            (self.col_y[e.x], self.col_t[e.x], self.col_seen[e.x], e.y),
        ):
            for slot in range(2):
                if seen[slot] and abs(int(coords[slot]) - own) == 1:
                    best = min(best, float(e.t - int(times[slot])))
        return best

    def update(self, e: Event) -> None:
        row = _replace_slot(self.row_t[e.y], self.row_seen[e.y])
        self.row_x[e.y, row] = e.x
        self.row_t[e.y, row] = e.t
        self.row_seen[e.y, row] = True
        col = _replace_slot(self.col_t[e.x], self.col_seen[e.x])
        self.col_y[e.x, col] = e.y
        self.col_t[e.x, col] = e.t
        self.col_seen[e.x, col] = True


def baf_classify(sae: Sae, e: Event, tau_us: float) -> Label:
    supported = bool(np.any(sae.neighbour_ages(e) <= tau_us))
    sae.update(e)
    return Label.SIGNAL if supported else Label.NOISE


def stcf_classify(sae: Sae, e: Event, tau_us: float, k: int) -> Label:
    if k < 1:
        raise ValueError(f"STCF needs k >= 1, got {k}")
    supported = int(np.count_nonzero(sae.neighbour_ages(e) <= tau_us)) >= k
    sae.update(e)
    return Label.SIGNAL if supported else Label.NOISE


def onf_classify(mem: OnfMemory, e: Event, tau_us: float) -> Label:
    supported = mem.support_age(e) <= tau_us
    mem.update(e)
    return Label.SIGNAL if supported else Label.NOISE


def _events(stream: EventStream) -> list[Event]:
    columns = zip(stream.x.tolist(), stream.y.tolist(), stream.t.tolist(), stream.p.tolist())
    return [Event(x, y, t, p) for x, y, t, p in columns]


def filter_decisions(
    filter: BaselineFilter | str,
    stream: EventStream,
    tau_us: float,
    k: int = 4,
    polarity_split: bool = False,
) -> np.ndarray:
    """Replay ``stream`` through fresh filter state; True where an event is kept as signal."""
    filter = BaselineFilter(filter)
    decisions = np.zeros(len(stream), dtype=bool)
    if filter == BaselineFilter.ONF:
        mem = OnfMemory(stream.geometry)
        for i, e in enumerate(_events(stream)):
            decisions[i] = onf_classify(mem, e, tau_us) == Label.SIGNAL
        return decisions
    sae = Sae(stream.geometry, polarity_split=polarity_split)
    for i, e in enumerate(_events(stream)):
        if filter == BaselineFilter.BAF:
            decisions[i] = baf_classify(sae, e, tau_us) == Label.SIGNAL
        else:
            decisions[i] = stcf_classify(sae, e, tau_us, k) == Label.SIGNAL
    return decisions


def support_statistics(
    filter: BaselineFilter | str,
    stream: EventStream,
    k: int = 4,
    polarity_split: bool = False,
) -> np.ndarray:
    """
    Per-event deciding age from a single replay: the event is signal at ``tau``
    exactly when its age is ``<= tau``. BAF uses the freshest neighbour, STCF the
    k-th freshest, ONF the freshest adjacent row or column entry; inf means never.
    """
    filter = BaselineFilter(filter)
    if k < 1:
        raise ValueError(f"STCF needs k >= 1, got {k}")
    ages = np.full(len(stream), np.inf)
    if filter == BaselineFilter.ONF:
        mem = OnfMemory(stream.geometry)
        for i, e in enumerate(_events(stream)):
            ages[i] = mem.support_age(e)
            mem.update(e)
        return ages
    rank = 1 if filter == BaselineFilter.BAF else k
    sae = Sae(stream.geometry, polarity_split=polarity_split)
    for i, e in enumerate(_events(stream)):
        if rank <= 8:
            ages[i] = np.partition(sae.neighbour_ages(e), rank - 1)[rank - 1]
        sae.update(e)
    return ages


def default_tau_grid(
    tau_min_us: float = DEFAULT_TAU_MIN_US,
    tau_max_us: float = DEFAULT_TAU_MAX_US,
    steps: int = DEFAULT_TAU_STEPS,
) -> np.ndarray:
    if not 0 < tau_min_us <= tau_max_us:
        raise ValueError(f"Invalid tau range [{tau_min_us}, {tau_max_us}]")
    if steps < 1:
        raise ValueError("tau grid needs at least one step")
    return np.geomspace(tau_min_us, tau_max_us, steps)


def roc_by_tau(
    filter: BaselineFilter | str,
    stream: EventStream,
    tau_range=None,
    k: int = 4,
    polarity_split: bool = False,
    method: str = "ages",
    max_workers: int | None = None,
    select: np.ndarray | None = None,
) -> RocCurve:
    """
    One (FPR, TPR) operating point per tau, as a RocCurve sorted by FPR.

    ``method="ages"`` derives every point from one replay; ``method="replay"`` runs a
    fresh replay per tau on a thread pool. Both give the same points. The whole stream
    is always replayed; a boolean ``select`` mask restricts which events are counted.
    """
    filter = BaselineFilter(filter)
    if not stream.is_fully_labeled():
        raise MetricsError("tau sweep needs a fully labeled stream")
    taus = default_tau_grid() if tau_range is None else np.asarray(tau_range, dtype=np.float64)
    if select is None:
        select = np.ones(len(stream), dtype=bool)
    select = np.asarray(select, dtype=bool)
    if select.shape != (len(stream),):
        raise ValueError(f"select mask has shape {select.shape}, stream has {len(stream)} events")
    labels = stream.label[select]

    if method == "ages":
        ages = support_statistics(filter, stream, k=k, polarity_split=polarity_split)
        decision_sets = [ages <= tau for tau in taus]
    elif method == "replay":
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [
                pool.submit(filter_decisions, filter, stream, float(tau), k, polarity_split)
                for tau in taus
            ]
            decision_sets = [future.result() for future in futures]
    else:
        raise ValueError(f"Unknown sweep method: {method}")

    points = []
    for tau, decisions in zip(taus, decision_sets):
        counts = confusion(decisions[select], labels)
        points.append((counts.fpr, counts.tpr))
        out.log_only(
            f"{filter.value} tau={tau:.0f}us: tpr={counts.tpr:.4f} fpr={counts.fpr:.4f}",
            level="debug",
        )
    return RocCurve.from_points(points, taus)
