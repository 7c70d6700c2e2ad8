"""Per-tree training multisets for every forest variant.

Every random draw is keyed by ``(master_seed, stage, id)`` through
:class:`numpy.random.SeedSequence`, so any single tree input can be rebuilt
on its own and the result never depends on the order trees are produced in.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import PlanError
from .tree import WeightedRows

__all__ = [
    "ResamplePlan",
    "SCHEMES",
    "derive_rng",
    "derive_seed",
    "bootstrap_standard",
    "blb_weights",
    "partition_chunks",
    "poisson_count",
    "plan_subsamples",
    "plan_tree_inputs",
]

SCHEMES = ("standard", "subsample", "moon", "blb", "dac", "poisson")

# stage keys for seed derivation
_BOOT, _SUBSAMPLE, _TAU, _GROW, _POISSON = 1, 2, 3, 4, 5


def derive_rng(master_seed, *key):
    return np.random.default_rng(np.random.SeedSequence([int(master_seed) % 2 ** 63, *key]))


def derive_seed(master_seed, *key):
    """32-bit seed for the compiled tree grower."""
    ss = np.random.SeedSequence([int(master_seed) % 2 ** 63, *key])
    return int(ss.generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class ResamplePlan:
    """How each tree's training multiset is produced.

    ``scheme`` is one of ``standard`` (seqRF/parRF), ``subsample`` (sampRF),
    ``moon`` (m-out-of-n), ``blb`` (Bag of Little Bootstraps), ``dac``
    (divide-and-conquer) or ``poisson`` (batch Poisson bootstrap). ``Q`` is
    the total tree count; for ``blb`` and ``dac`` it must equal ``K * q``.
    """

    scheme: str
    n: int
    Q: int
    m: int = None
    K: int = None
    q: int = None
    lam: float = 1.0
    master_seed: int = 0

    def __post_init__(self):
        s = self.scheme
        if s not in SCHEMES:
            raise PlanError("unknown scheme {!r}; expected one of {}".format(s, ", ".join(SCHEMES)))
        if self.n < 1:
            raise PlanError("n must be >= 1")
        if self.Q < 1:
            raise PlanError("Q must be >= 1")
        if s in ("subsample", "moon", "blb"):
            if self.m is None or not 1 <= self.m <= self.n:
                raise PlanError("{} needs 1 <= m <= n, got m={} n={}".format(s, self.m, self.n))
        if s in ("blb", "dac"):
            if self.K is None or self.q is None or self.K < 1 or self.q < 1:
                raise PlanError("{} needs K >= 1 and q >= 1".format(s))
            if self.K * self.q != self.Q:
                raise PlanError("{} needs K*q == Q, got {}*{} != {}".format(s, self.K, self.q, self.Q))
        if s == "dac" and self.K > self.n:
            raise PlanError("dac needs K <= n")
        if s == "poisson" and not self.lam > 0:
            raise PlanError("poisson needs lam > 0")

    @classmethod
    def standard(cls, n, Q, master_seed=0):
        return cls("standard", n, Q, master_seed=master_seed)

    @classmethod
    def subsample(cls, n, Q, m, master_seed=0):
        return cls("subsample", n, Q, m=m, master_seed=master_seed)

    @classmethod
    def moon(cls, n, Q, m, master_seed=0):
        return cls("moon", n, Q, m=m, master_seed=master_seed)

    @classmethod
    def blb(cls, n, K, q, m, master_seed=0):
        return cls("blb", n, K * q, m=m, K=K, q=q, master_seed=master_seed)

    @classmethod
    def dac(cls, n, K, q, master_seed=0):
        return cls("dac", n, K * q, K=K, q=q, master_seed=master_seed)

    @property
    def n_groups(self):
        """Number of subforests (trees sharing one subsample or chunk)."""
        if self.scheme in ("blb", "dac"):
            return self.K
        if self.scheme == "moon":
            return self.Q
        return 1

    def group_of(self, tree_id):
        if self.scheme in ("blb", "dac"):
            return tree_id // self.q
        if self.scheme == "moon":
            return tree_id
        return 0

    def subforest_boundaries(self):
        """``(start, stop)`` tree-id ranges, one per subforest."""
        if self.scheme in ("blb", "dac"):
            return [(l * self.q, (l + 1) * self.q) for l in range(self.K)]
        return [(0, self.Q)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def bootstrap_standard(n, seed=0):
    """n uniform draws with replacement, as distinct ids with multiplicities."""
    if n < 1:
        raise PlanError("bootstrap needs n >= 1")
    rng = np.random.default_rng(seed)
    counts = np.bincount(rng.integers(0, n, n), minlength=n)
    return WeightedRows.from_counts(counts)


def blb_weights(m, n, seed=0):
    """One multinomial(n; 1/m, ..., 1/m) draw; entries sum exactly to n."""
    if not 1 <= m <= n:
        raise PlanError("blb weights need 1 <= m <= n, got m={} n={}".format(m, n))
    rng = np.random.default_rng(seed)
    return rng.multinomial(n, np.full(m, 1.0 / m))


def partition_chunks(n, K):
    """K contiguous ``range`` objects of size floor(n/K) or ceil(n/K), in file order."""
    if not 1 <= K <= n:
        raise PlanError("partition needs 1 <= K <= n, got K={} n={}".format(K, n))
    base, extra = divmod(n, K)
    out = []
    start = 0
    for l in range(K):
        size = base + (1 if l < extra else 0)
        out.append(range(start, start + size))
        start += size
    return out


def poisson_count(lam, rng):
    if not lam > 0:
        raise PlanError("Poisson rate must be positive")
    return int(rng.poisson(lam))


def _check(plan, ds):
    n = ds if isinstance(ds, (int, np.integer)) else ds.n
    if n != plan.n:
        raise PlanError("plan was built for n={} but the dataset has n={}".format(plan.n, n))
    return n


def plan_subsamples(plan, ds):
    """Row-id sets shared by each subforest.

    ``subsample``: the single subsample; ``moon``: one subsample per tree;
    ``blb``: the K subsamples tau_l; ``dac``: the K chunks. None for
    ``standard`` and ``poisson``.
    """
    n = _check(plan, ds)
    s = plan.scheme
    if s == "subsample":
        return [np.sort(derive_rng(plan.master_seed, _SUBSAMPLE, 0).choice(n, plan.m, replace=False))]
    if s == "moon":
        return [np.sort(derive_rng(plan.master_seed, _SUBSAMPLE, t).choice(n, plan.m, replace=False))
                for t in range(plan.Q)]
    if s == "blb":
        return [np.sort(derive_rng(plan.master_seed, _TAU, l).choice(n, plan.m, replace=False))
                for l in range(plan.K)]
    if s == "dac":
        return [np.arange(r.start, r.stop) for r in partition_chunks(n, plan.K)]
    return None


def tree_input(plan, tree_id, subsamples=None):
    """WeightedRows for one tree. ``subsamples`` may be passed to avoid recomputing them."""
    s = plan.scheme
    rng = derive_rng(plan.master_seed, _BOOT, tree_id)
    if s == "standard":
        counts = np.bincount(rng.integers(0, plan.n, plan.n), minlength=plan.n)
        return WeightedRows.from_counts(counts)
    if s == "poisson":
        return WeightedRows.from_counts(rng.poisson(plan.lam, plan.n))
    if subsamples is None:
        subsamples = plan_subsamples(plan, plan.n)
    base = subsamples[plan.group_of(tree_id)]
    if s == "moon":
        return WeightedRows.uniform(base)
    if s == "blb":
        counts = rng.multinomial(plan.n, np.full(base.size, 1.0 / base.size))
    else:
        # subsample and dac: ordinary bootstrap of the shared row set
        counts = np.bincount(rng.integers(0, base.size, base.size), minlength=base.size)
    nz = np.flatnonzero(counts)
    return WeightedRows(base[nz], counts[nz].astype(np.float64))


def plan_tree_inputs(plan, ds):
    """List of ``(tree_id, WeightedRows)`` for every tree of the plan."""
    _check(plan, ds)
    subsamples = plan_subsamples(plan, ds)
    return [(t, tree_input(plan, t, subsamples)) for t in range(plan.Q)]


def grow_seed(plan, tree_id):
    return derive_seed(plan.master_seed, _GROW, tree_id)


def sampling_size(n, m=None, f=None):
    """Resolve an explicit size ``m`` or a fraction ``f`` of ``n`` (floored)."""
    if (m is None) == (f is None):
        raise PlanError("give exactly one of m or f")
    if m is None:
        if not 0 < f <= 1:
            raise PlanError("sampling fraction must lie in (0, 1]")
        m = int(math.floor(f * n + 1e-9))
    if not 1 <= m <= n:
        raise PlanError("resolved subsample size {} outside [1, {}]".format(m, n))
    return int(m)
