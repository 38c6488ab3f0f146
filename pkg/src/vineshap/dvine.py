"""D-vine copula model.

A model is an order permutation, a triangular table of pair copulas
(pairs[i][j] links order positions j and j+i+1 given the positions in
between, 0-based) and one marginal model per original feature.  All
evaluations run on copula scale; marginals only enter at the data-scale
boundary (conditional sampling).

The simplified-vine assumption makes every contiguous sub-block of the
order itself a D-vine, which is what the ratio method's marginal
densities rely on.
"""

import json
from dataclasses import dataclass

import numpy as np

from .bicop import (GridCopula, IndependenceCopula, PairCopula,
                    fit_nonparametric, fit_parametric, DEFAULT_FAMILIES)
from .errors import (InvalidInputError, UnsupportedBlockError,
                     UnsupportedCoalitionError)
from .marginals import EmpiricalMarginal

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Block:
    """Contiguous range of order positions, 0-based inclusive bounds."""
    start: int
    end: int


class ParametricMode:
    def __init__(self, families=DEFAULT_FAMILIES, refine=False):
        self.families = tuple(families)
        self.refine = refine

    def fit_edge(self, u, tree):
        return fit_parametric(u, families=self.families, refine=self.refine)


class NonparametricMode:
    def __init__(self, grid_size=64):
        self.grid_size = int(grid_size)

    def fit_edge(self, u, tree):
        return fit_nonparametric(u, grid_size=self.grid_size)


class FixedMode:
    """Install a given pair copula everywhere, or one per tree level."""

    def __init__(self, copula):
        self.copula = copula

    def fit_edge(self, u, tree):
        if isinstance(self.copula, PairCopula):
            return self.copula
        return self.copula[tree]


class DVineModel:

    def __init__(self, order, pairs, marginals):
        order = tuple(int(o) for o in order)
        m = len(order)
        if sorted(order) != list(range(m)):
            raise InvalidInputError(f"order must be a permutation of 0..{m - 1}")
        if len(pairs) != m - 1 or any(len(pairs[i]) != m - 1 - i for i in range(m - 1)):
            raise InvalidInputError("pair table must be triangular with M(M-1)/2 entries")
        if len(marginals) != m:
            raise InvalidInputError("need one marginal per feature")
        self.order = order
        self.pairs = [list(row) for row in pairs]
        self.marginals = list(marginals)

    @property
    def M(self):
        return len(self.order)

    # ------------------------------------------------------------------
    # core recursion

    def _triangle(self, V, pairs=None):
        """Conditional-cdf triangle over the columns of V (order scale).

        Returns (left, right): left[i][j] = F(v_j | v_{j+1..j+i}) and
        right[i][j] = F(v_{j+i+1} | v_{j+1..j+i}), for tree level i
        (0-based; level 0 holds the raw columns).  At level i, left has
        m-i entries and right has m-1-i; the extra left entry is the
        diagonal value needed by the inverse Rosenblatt transform.
        """
        if pairs is None:
            pairs = self.pairs
        m = V.shape[1]
        left = [[V[:, j] for j in range(m)]]
        right = [[V[:, j + 1] for j in range(m - 1)]]
        for i in range(m - 1):
            lrow = [pairs[i][j].hfunc(left[i][j], right[i][j], "second")
                    for j in range(m - 1 - i)]
            rrow = [pairs[i][j + 1].hfunc(left[i][j + 1], right[i][j + 1], "first")
                    for j in range(m - 2 - i)]
            left.append(lrow)
            right.append(rrow)
        return left, right

    def _log_density_positions(self, V, pairs=None):
        """Sum of log pair densities for columns already in order scale."""
        if pairs is None:
            pairs = self.pairs
        m = V.shape[1]
        out = np.zeros(V.shape[0])
        if m < 2:
            return out
        left, right = self._triangle(V, pairs)
        for i in range(m - 1):
            for j in range(m - 1 - i):
                out += pairs[i][j].log_density(left[i][j], right[i][j])
        return out

    # ------------------------------------------------------------------
    # densities

    def copula_log_density(self, u):
        """Log D-vine copula density at u (original feature indexing)."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if u.shape[1] != self.M:
            raise InvalidInputError(f"expected {self.M} columns, got {u.shape[1]}")
        out = self._log_density_positions(u[:, self.order])
        return out if np.asarray(u).ndim > 1 and u.shape[0] > 1 else float(out[0])

    def _sub_pairs(self, start, end):
        return [[self.pairs[i][j] for j in range(start, end - i)]
                for i in range(end - start)]

    def marginal_copula_log_density(self, block, u_block):
        """Log density of the sub-D-vine on order positions start..end.

        u_block holds values for order positions start..end, in order
        sequence.
        """
        s, e = block.start, block.end
        if not (0 <= s <= e < self.M):
            raise UnsupportedBlockError(f"invalid block [{s}, {e}] for M={self.M}")
        u_block = np.atleast_2d(np.asarray(u_block, dtype=float))
        if u_block.shape[1] != e - s + 1:
            raise InvalidInputError("u_block width must match the block length")
        if s == e:
            out = np.zeros(u_block.shape[0])
        else:
            out = self._log_density_positions(u_block, self._sub_pairs(s, e))
        return out if u_block.shape[0] > 1 else float(out[0])

    def block_for(self, features):
        """Block of order positions for a feature set; raises if not contiguous."""
        pos = sorted(self.order.index(f) for f in features)
        if not pos:
            raise UnsupportedBlockError("empty feature set has no block")
        if pos != list(range(pos[0], pos[-1] + 1)):
            raise UnsupportedBlockError(
                f"features {sorted(features)} are not contiguous in order {self.order}")
        return Block(pos[0], pos[-1])

    # ------------------------------------------------------------------
    # Rosenblatt transform and inverse

    def rosenblatt(self, u):
        """w_k = F(u_{pi_k} | u_{pi_1..pi_{k-1}}); output in position indexing."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        V = np.clip(u[:, self.order], 1e-10, 1 - 1e-10)
        m = self.M
        W = np.empty_like(V)
        W[:, 0] = V[:, 0]
        if m > 1:
            left, right = self._triangle(V)
            for k in range(1, m):
                # edge (tree k-1, first edge) conditions position k on 0..k-1
                pc = self.pairs[k - 1][0]
                W[:, k] = pc.hfunc(left[k - 1][0], right[k - 1][0], "first")
        return W if u.shape[0] > 1 else W[0]

    def inverse_rosenblatt(self, w):
        """Inverse of :meth:`rosenblatt`; returns u in original indexing."""
        w = np.atleast_2d(np.asarray(w, dtype=float))
        if w.shape[1] != self.M:
            raise InvalidInputError(f"expected {self.M} columns, got {w.shape[1]}")
        W = np.clip(w, 1e-10, 1 - 1e-10)
        m = self.M
        V = np.empty_like(W)
        V[:, 0] = W[:, 0]
        for k in range(1, m):
            left, _ = self._triangle(V[:, :k])
            z = W[:, k]
            # invert the h-function chain F(v_k | v_{k-i..k-1}), i = k..1
            for i in range(k, 0, -1):
                pc = self.pairs[i - 1][k - i]
                cond = left[i - 1][k - i]
                z = pc.hinv(z, cond, "first")
            V[:, k] = z
        U = np.empty_like(V)
        U[:, list(self.order)] = V
        return U if w.shape[0] > 1 else U[0]

    # ------------------------------------------------------------------
    # conditional sampling

    def reversed(self):
        """Same model with the order reversed (pair table mirrored/transposed)."""
        m = self.M
        pairs = [[self.pairs[i][m - 2 - i - j].transpose()
                  for j in range(m - 1 - i)] for i in range(m - 1)]
        return DVineModel(self.order[::-1], pairs, self.marginals)

    def coalition_role(self, features):
        """'prefix' or 'suffix' if the feature set lines up with the order."""
        s = set(features)
        k = len(s)
        if 0 < k < self.M:
            if s == set(self.order[:k]):
                return "prefix"
            if s == set(self.order[-k:]):
                return "suffix"
        return None

    def conditional_sample(self, features, x_star, K, rng):
        """Draw K joint samples conditional on the given features.

        `features` must form a prefix or suffix of the order; `x_star` is
        the full M-vector on data scale (only the conditioning entries are
        read).  Returns a K x M data-scale table with the conditioning
        columns pinned at their x_star values.
        """
        role = self.coalition_role(features)
        if role is None:
            raise UnsupportedCoalitionError(
                f"coalition {sorted(features)} is not a prefix or suffix "
                f"of order {self.order}")
        model = self if role == "prefix" else self.reversed()
        s = len(set(features))
        x_star = np.asarray(x_star, dtype=float)

        u_star = np.full(model.M, 0.5)
        for f in features:
            u_star[f] = model.marginals[f].cdf(x_star[f])

        # transform of the conditioning prefix; positions > s are overwritten
        w_prefix = model.rosenblatt(u_star)[:s]
        W = np.empty((K, model.M))
        W[:, :s] = w_prefix
        W[:, s:] = rng.uniform(size=(K, model.M - s))
        U = model.inverse_rosenblatt(W)

        X = np.empty((K, model.M))
        for f in range(model.M):
            if f in set(features):
                X[:, f] = x_star[f]
            else:
                X[:, f] = model.marginals[f].quantile(np.clip(U[:, f], 1e-12, 1 - 1e-12))
        return X

    # ------------------------------------------------------------------
    # serialization

    def to_dict(self):
        return {
            "format": "dvine",
            "version": FORMAT_VERSION,
            "order": list(self.order),
            "pairs": [[pc.to_dict() for pc in row] for row in self.pairs],
            "marginals": [m.to_dict() for m in self.marginals],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "dvine" or d.get("version") != FORMAT_VERSION:
            raise InvalidInputError("unrecognized dvine serialization format")
        pairs = [[PairCopula.from_dict(pc) for pc in row] for row in d["pairs"]]
        marginals = [EmpiricalMarginal.from_dict(m) for m in d["marginals"]]
        return cls(d["order"], pairs, marginals)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def pseudo_observations(data, marginals):
    """Map a data table to copula scale through the fitted marginals."""
    data = np.asarray(data, dtype=float)
    return np.column_stack([marginals[j].cdf(data[:, j]) for j in range(data.shape[1])])


def fit_dvine(data, order, mode=None, marginals=None):
    """Fit a D-vine sequentially, tree by tree.

    Tree 1 copulas are fitted on pseudo-observations of adjacent order
    positions; higher trees use h-function transforms of the previous
    tree's arguments.  `mode` is one of ParametricMode, NonparametricMode
    or FixedMode (fixed installs copulas without touching the data).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise InvalidInputError("data must be an N x M table")
    n, m = data.shape
    if not np.all(np.isfinite(data)):
        raise InvalidInputError("data must be finite")
    order = tuple(int(o) for o in order)
    if sorted(order) != list(range(m)):
        raise InvalidInputError(f"order must be a permutation of 0..{m - 1}")
    if mode is None:
        mode = ParametricMode()
    fixed = isinstance(mode, FixedMode)
    if not fixed and n < 30:
        raise InvalidInputError(f"need at least 30 rows to fit, got {n}")

    if marginals is None:
        marginals = [EmpiricalMarginal(data[:, j]) for j in range(m)]
    U = pseudo_observations(data, marginals)
    V = U[:, order]

    pairs = []
    left = [V[:, j] for j in range(m - 1)]
    right = [V[:, j + 1] for j in range(m - 1)]
    for i in range(m - 1):
        row = []
        for j in range(m - 1 - i):
            if fixed:
                row.append(mode.fit_edge(None, i))
            else:
                row.append(mode.fit_edge(np.column_stack([left[j], right[j]]), i))
        pairs.append(row)
        if i < m - 2:
            new_left, new_right = [], []
            for j in range(m - 2 - i):
                new_left.append(row[j].hfunc(left[j], right[j], "second"))
                new_right.append(row[j + 1].hfunc(left[j + 1], right[j + 1], "first"))
            left, right = new_left, new_right
    return DVineModel(order, pairs, marginals)
