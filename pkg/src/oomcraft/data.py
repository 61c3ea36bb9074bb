"""Container for sets of observation trajectories."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InputError

__all__ = ["TrajectoryDataset"]


@dataclass
class TrajectoryDataset:
    """``I`` trajectories of discrete symbols or ``d``-dimensional points.

    Discrete trajectories are stored as integer arrays of shape ``(T_i,)``,
    continuous ones as float arrays of shape ``(T_i, d)``. ``metadata`` holds
    free-form provenance (seed, configuration, abort counts) as strings.
    """

    trajectories: list
    kind: str = "continuous"
    dim: int = 1
    metadata: dict = field(default_factory=dict)
    n_aborted: int = 0

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise InputError(f"unknown dataset kind {self.kind!r}")
        trajs = []
        for i, traj in enumerate(self.trajectories):
            if self.kind == "discrete":
                arr = np.asarray(traj)
                if arr.ndim != 1:
                    raise DimensionError(f"discrete trajectory {i} must be one-dimensional")
                if arr.size and (not np.issubdtype(arr.dtype, np.integer)):
                    if not np.all(arr == np.round(arr)):
                        raise InputError(f"discrete trajectory {i} has non-integer symbols")
                arr = arr.astype(np.int64)
                if arr.size and arr.min() < 0:
                    raise InputError(f"discrete trajectory {i} has negative symbols")
            else:
                arr = np.asarray(traj, dtype=float)
                if arr.ndim == 1:
                    arr = arr[:, None]
                if arr.ndim != 2 or arr.shape[1] != self.dim:
                    raise DimensionError(
                        f"trajectory {i} has shape {arr.shape}, expected (T, {self.dim})"
                    )
                if not np.all(np.isfinite(arr)):
                    raise InputError(f"trajectory {i} contains non-finite values")
            trajs.append(arr)
        self.trajectories = trajs
        if self.kind == "discrete":
            self.dim = 1

    @classmethod
    def from_discrete(cls, trajectories, **kwargs):
        return cls([np.asarray(t) for t in trajectories], kind="discrete", dim=1, **kwargs)

    @classmethod
    def from_continuous(cls, trajectories, **kwargs):
        trajs = [np.asarray(t, dtype=float) for t in trajectories]
        trajs = [t[:, None] if t.ndim == 1 else t for t in trajs]
        dim = trajs[0].shape[1] if trajs else 1
        return cls(trajs, kind="continuous", dim=dim, **kwargs)

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    @property
    def lengths(self):
        return [len(t) for t in self.trajectories]

    @property
    def n_samples(self):
        return int(sum(self.lengths))

    @property
    def alphabet_size(self):
        """Number of symbols, from metadata if recorded, else ``max + 1``."""
        if self.kind != "discrete":
            raise InputError("continuous datasets have no alphabet")
        if "alphabet_size" in self.metadata:
            return int(self.metadata["alphabet_size"])
        top = max((int(t.max()) for t in self.trajectories if t.size), default=0)
        return top + 1

    def concatenated(self):
        if not self.trajectories:
            raise InputError("dataset is empty")
        return np.concatenate(self.trajectories, axis=0)

    def map(self, fn, kind=None, dim=None):
        """New dataset with ``fn`` applied to every trajectory array."""
        kind = kind or self.kind
        trajs = [fn(t) for t in self.trajectories]
        if kind == "continuous" and dim is None:
            dim = np.asarray(trajs[0]).reshape(len(trajs[0]), -1).shape[1] if trajs else self.dim
        return TrajectoryDataset(
            trajs, kind=kind, dim=dim or 1, metadata=dict(self.metadata), n_aborted=self.n_aborted
        )
