"""Hub placement by k-means and load-to-hub assignment."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .instance import GeoPoint, Instance, Load


@dataclass(frozen=True)
class Hub:
    id: int
    location: GeoPoint


@dataclass(frozen=True)
class Task:
    """Autonomous leg of one load: origin hub -> destination hub."""

    id: int
    load_ref: int
    origin_hub: int
    dest_hub: int
    pickup_time: int
    origin: GeoPoint
    destination: GeoPoint

    def window(self, delta: int) -> tuple[int, int]:
        return self.pickup_time - delta, self.pickup_time + delta


def endpoint_array(instance: Instance) -> np.ndarray:
    pts = []
    for ld in instance.loads:
        pts.append((ld.origin.x, ld.origin.y))
        pts.append((ld.destination.x, ld.destination.y))
    return np.array(pts, dtype=float).reshape(-1, 2)


def _kmeanspp(points, k, rng):
    centres = np.empty((k, 2))
    centres[0] = points[rng.integers(len(points))]
    d2 = ((points - centres[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        # k <= distinct points guarantees d2.sum() > 0 here
        idx = int(rng.choice(len(points), p=d2 / d2.sum()))
        centres[i] = points[idx]
        d2 = np.minimum(d2, ((points - centres[i]) ** 2).sum(axis=1))
    return centres


def _sq_dists(points, centres):
    return ((points[:, None, :] - centres[None, :, :]) ** 2).sum(axis=-1)


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iters: int = 100, tol: float = 1e-6):
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(centres, labels, history)`` where ``history`` holds the
    within-cluster sum of squares after every assignment step.
    """
    points = np.asarray(points, dtype=float)
    n_distinct = len(np.unique(points, axis=0)) if len(points) else 0
    if k < 1 or k > n_distinct:
        raise ConfigurationError(f"cannot place {k} hubs on {n_distinct} distinct endpoint locations")
    rng = np.random.default_rng(seed)
    centres = _kmeanspp(points, k, rng)
    history = []
    labels = None
    for _ in range(max_iters):
        d2 = _sq_dists(points, centres)
        labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(points)), labels].sum()))
        new = centres.copy()
        counts = np.bincount(labels, minlength=k)
        for c in range(k):
            if counts[c]:
                new[c] = points[labels == c].mean(axis=0)
        for c in np.flatnonzero(counts == 0):
            # reseed at the point farthest from its current centre
            own = d2[np.arange(len(points)), labels]
            far = int(np.argmax(own))
            new[c] = points[far]
            labels[far] = c
            d2[far, :] = 0.0
        shift = np.sqrt(((new - centres) ** 2).sum(axis=1)).max()
        centres = new
        if shift < tol:
            break
    d2 = _sq_dists(points, centres)
    labels = d2.argmin(axis=1)
    history.append(float(d2[np.arange(len(points)), labels].sum()))
    return centres, labels, history


def kmeans_hubs(instance: Instance, num_hubs: int, seed: int = 0, max_iters: int = 100, tol: float = 1e-6) -> list[Hub]:
    centres, _, _ = kmeans(endpoint_array(instance), num_hubs, seed, max_iters, tol)
    return [Hub(i, GeoPoint(float(x), float(y))) for i, (x, y) in enumerate(centres)]


def _pair_costs(origins, destinations, hub_xy, gamma):
    """Assignment cost for every (load, h+, h-) triple, shape (n, H, H)."""
    first = np.hypot(origins[:, None, 0] - hub_xy[None, :, 0], origins[:, None, 1] - hub_xy[None, :, 1])
    last = np.hypot(destinations[:, None, 0] - hub_xy[None, :, 0], destinations[:, None, 1] - hub_xy[None, :, 1])
    middle = np.hypot(hub_xy[:, None, 0] - hub_xy[None, :, 0], hub_xy[:, None, 1] - hub_xy[None, :, 1])
    return first[:, :, None] + (1.0 - gamma) * middle[None, :, :] + last[:, None, :]


def _assign_many(loads, hubs: list[Hub], gamma: float, chunk: int = 64):
    ordered = sorted(hubs, key=lambda h: h.id)
    hub_xy = np.array([(h.location.x, h.location.y) for h in ordered], dtype=float)
    ids = [h.id for h in ordered]
    H = len(ordered)
    out = []
    for start in range(0, len(loads), chunk):
        part = loads[start : start + chunk]
        o = np.array([(ld.origin.x, ld.origin.y) for ld in part], dtype=float)
        d = np.array([(ld.destination.x, ld.destination.y) for ld in part], dtype=float)
        cost = _pair_costs(o, d, hub_xy, gamma).reshape(len(part), H * H)
        # argmin returns the first minimum in row-major order: lowest (h+, h-) by id
        flat = cost.argmin(axis=1)
        out.extend((ids[int(f) // H], ids[int(f) % H]) for f in flat)
    return out


def assign_hubs(load: Load, hubs: list[Hub], gamma: float) -> tuple[int, int]:
    """Hub pair minimising first mile + discounted middle mile + last mile."""
    if not hubs:
        raise ConfigurationError("assign_hubs needs at least one hub")
    return _assign_many([load], hubs, gamma)[0]


def assignment_cost(load: Load, origin_hub: Hub, dest_hub: Hub, gamma: float) -> float:
    o = np.array([[load.origin.x, load.origin.y]])
    d = np.array([[load.destination.x, load.destination.y]])
    xy = np.array([[origin_hub.location.x, origin_hub.location.y], [dest_hub.location.x, dest_hub.location.y]])
    return float(_pair_costs(o, d, xy, gamma)[0, 0, 1])


def build_tasks(instance: Instance, hubs: list[Hub]) -> list[Task]:
    pairs = _assign_many(list(instance.loads), hubs, instance.params.gamma) if instance.loads else []
    return [
        Task(ld.id, ld.id, hp, hm, ld.release_time, ld.origin, ld.destination)
        for ld, (hp, hm) in zip(instance.loads, pairs)
    ]


def write_hubs_csv(hubs: list[Hub], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hub_id", "x", "y"])
        for h in hubs:
            w.writerow([h.id, repr(h.location.x), repr(h.location.y)])


def read_hubs_csv(path) -> list[Hub]:
    with open(path, newline="") as fh:
        return [Hub(int(r["hub_id"]), GeoPoint(float(r["x"]), float(r["y"]))) for r in csv.DictReader(fh)]
