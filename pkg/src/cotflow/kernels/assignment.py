"""Dense square linear assignment: shortest augmenting paths plus a
lexicographic normalisation pass.

Two code paths produce the same permutation:

* ``_lapjv_loops`` / ``_lex_loops`` are plain loops compiled with numba. The
  solver is Jonker-Volgenant: a column-reduction warm start, then
  shortest augmenting paths.
* ``_sap_numpy`` / ``_lex_numpy`` run one vectorised shortest-path search per
  row (``_sap_loops`` is its loop twin, kept as a reference).

The augmenting-path phase can pick different (equally optimal) solutions
depending on scan order, so both paths finish with the lexicographic pass,
which maps every optimal solution onto the same canonical one.
"""
import math

import numpy as np

from .. import _accel
from .._accel import njit


class InfeasibleAssignment(ValueError):
    pass


def _sap_loops(cost):
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    shortest = np.empty(n)
    path = np.full(n, -1, dtype=np.int64)
    remaining = np.empty(n, dtype=np.int64)
    seen_row = np.zeros(n, dtype=np.bool_)
    seen_col = np.zeros(n, dtype=np.bool_)

    for cur_row in range(n):
        for it in range(n):
            remaining[it] = n - it - 1
            shortest[it] = np.inf
            seen_row[it] = False
            seen_col[it] = False
        num_remaining = n
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            seen_row[i] = True
            index = -1
            lowest = np.inf
            ui = u[i]
            for it in range(num_remaining):
                j = remaining[it]
                r = min_val + cost[i, j] - ui - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                sj = shortest[j]
                if sj < lowest or (sj == lowest and row4col[j] == -1):
                    lowest = sj
                    index = it
            if index == -1 or lowest == np.inf:
                return col4row, u, v, False
            min_val = lowest
            j = remaining[index]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            seen_col[j] = True
            num_remaining -= 1
            remaining[index] = remaining[num_remaining]

        u[cur_row] += min_val
        for r in range(n):
            if seen_row[r] and r != cur_row:
                u[r] += min_val - shortest[col4row[r]]
        for j in range(n):
            if seen_col[j]:
                v[j] -= min_val - shortest[j]

        j = sink
        while True:
            r = path[j]
            row4col[j] = r
            nxt = col4row[r]
            col4row[r] = j
            j = nxt
            if r == cur_row:
                break
    return col4row, u, v, True


def _lapjv_loops(cost):
    # Jonker & Volgenant (1987): column reduction and reduction transfer, then
    # shortest augmenting paths for the rows still free. The augmenting row
    # reduction phase is left out: on clustered float costs it cycles through
    # tiny price decrements and ran 30-70x slower than plain augmentation.
    n = cost.shape[0]
    v = np.empty(n)
    u = np.empty(n)
    rowsol = np.full(n, -1, dtype=np.int64)
    colsol = np.full(n, -1, dtype=np.int64)
    matches = np.zeros(n, dtype=np.int64)
    free = np.empty(n, dtype=np.int64)
    big = np.inf
    if n == 1:
        rowsol[0] = 0
        u[0] = cost[0, 0]
        v[0] = 0.0
        return rowsol, u, v, True

    for j in range(n - 1, -1, -1):
        mn = cost[0, j]
        imin = 0
        for i in range(1, n):
            if cost[i, j] < mn:
                mn = cost[i, j]
                imin = i
        v[j] = mn
        matches[imin] += 1
        if matches[imin] == 1:
            rowsol[imin] = j
            colsol[j] = imin
        elif mn < cost[imin, rowsol[imin]]:
            j1 = rowsol[imin]
            rowsol[imin] = j
            colsol[j] = imin
            colsol[j1] = -1
        else:
            colsol[j] = -1

    numfree = 0
    for i in range(n):
        if matches[i] == 0:
            free[numfree] = i
            numfree += 1
        elif matches[i] == 1:
            j1 = rowsol[i]
            mn = big
            for j in range(n):
                if j != j1 and cost[i, j] - v[j] < mn:
                    mn = cost[i, j] - v[j]
            v[j1] = v[j1] - mn

    d = np.empty(n)
    pred = np.empty(n, dtype=np.int64)
    collist = np.empty(n, dtype=np.int64)
    for f in range(numfree):
        freerow = free[f]
        for j in range(n):
            d[j] = cost[freerow, j] - v[j]
            pred[j] = freerow
            collist[j] = j
        low = 0
        up = 0
        last = 0
        mn = 0.0
        endofpath = -1
        found = False
        while not found:
            if up == low:
                last = low - 1
                mn = d[collist[up]]
                up += 1
                for k in range(up, n):
                    j = collist[k]
                    h = d[j]
                    if h <= mn:
                        if h < mn:
                            up = low
                            mn = h
                        collist[k] = collist[up]
                        collist[up] = j
                        up += 1
                if mn == big:
                    return rowsol, u, v, False
                for k in range(low, up):
                    if colsol[collist[k]] < 0:
                        endofpath = collist[k]
                        found = True
                        break
            if not found:
                j1 = collist[low]
                low += 1
                i = colsol[j1]
                h = cost[i, j1] - v[j1] - mn
                for k in range(up, n):
                    j = collist[k]
                    v2 = cost[i, j] - v[j] - h
                    if v2 < d[j]:
                        pred[j] = i
                        if v2 == mn:
                            if colsol[j] < 0:
                                endofpath = j
                                found = True
                                break
                            collist[k] = collist[up]
                            collist[up] = j
                            up += 1
                        d[j] = v2
        for k in range(last + 1):
            j1 = collist[k]
            v[j1] = v[j1] + d[j1] - mn
        while True:
            i = pred[endofpath]
            colsol[endofpath] = i
            j1 = endofpath
            endofpath = rowsol[i]
            rowsol[i] = j1
            if i == freerow:
                break

    for i in range(n):
        mn = big
        for j in range(n):
            h = cost[i, j] - v[j]
            if h < mn:
                mn = h
        u[i] = mn
    return rowsol, u, v, True


def _sap_numpy(cost):
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    path = np.full(n, -1, dtype=np.int64)

    for cur_row in range(n):
        shortest = np.full(n, np.inf)
        remaining = np.ones(n, dtype=bool)
        seen_row = np.zeros(n, dtype=bool)
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            seen_row[i] = True
            r = min_val + cost[i] - u[i] - v
            upd = remaining & (r < shortest)
            path[upd] = i
            shortest[upd] = r[upd]
            cand = np.where(remaining, shortest, np.inf)
            lowest = cand.min()
            if lowest == np.inf:
                return col4row, u, v, False
            ties = np.flatnonzero(cand == lowest)
            free = ties[row4col[ties] == -1]
            j = int(free[0]) if free.size else int(ties[0])
            min_val = lowest
            if row4col[j] == -1:
                sink = j
            else:
                i = int(row4col[j])
            remaining[j] = False

        seen_col = ~remaining
        u[cur_row] += min_val
        rows = np.flatnonzero(seen_row)
        rows = rows[rows != cur_row]
        u[rows] += min_val - shortest[col4row[rows]]
        v[seen_col] -= min_val - shortest[seen_col]

        j = sink
        while True:
            r = int(path[j])
            row4col[j] = r
            col4row[r], j = j, int(col4row[r])
            if r == cur_row:
                break
    return col4row, u, v, True


def _lex_loops(eq, col4row):
    # Canonicalise to the lexicographically smallest perfect matching of the
    # equality graph ``eq`` (every optimal assignment lives there).
    n = eq.shape[0]
    row4col = np.empty(n, dtype=np.int64)
    for r in range(n):
        row4col[col4row[r]] = r
    locked_col = np.zeros(n, dtype=np.bool_)
    visited = np.zeros(n, dtype=np.bool_)
    via = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)

    for i in range(n):
        target = col4row[i]
        for j in range(target):
            if not eq[i, j] or locked_col[j]:
                continue
            start = row4col[j]
            for k in range(n):
                visited[k] = False
            visited[j] = True
            head = 0
            tail = 1
            queue[0] = start
            found = False
            while head < tail and not found:
                r = queue[head]
                head += 1
                for jj in range(n):
                    if eq[r, jj] and not locked_col[jj] and not visited[jj]:
                        visited[jj] = True
                        via[jj] = r
                        if jj == target:
                            found = True
                            break
                        queue[tail] = row4col[jj]
                        tail += 1
            if found:
                jj = target
                while True:
                    rr = via[jj]
                    old = col4row[rr]
                    col4row[rr] = jj
                    row4col[jj] = rr
                    if rr == start:
                        break
                    jj = old
                col4row[i] = j
                row4col[j] = i
                break
        locked_col[col4row[i]] = True
    return col4row


def _lex_numpy(eq, col4row):
    n = eq.shape[0]
    col4row = col4row.copy()
    row4col = np.empty(n, dtype=np.int64)
    row4col[col4row] = np.arange(n)
    locked_col = np.zeros(n, dtype=bool)

    for i in range(n):
        target = int(col4row[i])
        cands = np.flatnonzero(eq[i, :target] & ~locked_col[:target])
        for j in cands:
            j = int(j)
            start = int(row4col[j])
            visited = locked_col.copy()
            visited[j] = True
            via = np.full(n, -1, dtype=np.int64)
            frontier = [start]
            found = False
            while frontier and not found:
                nxt = []
                for r in frontier:
                    hits = np.flatnonzero(eq[r] & ~visited)
                    if hits.size == 0:
                        continue
                    visited[hits] = True
                    via[hits] = r
                    if target in hits:
                        found = True
                        break
                    nxt.extend(int(row4col[h]) for h in hits)
                frontier = nxt
            if found:
                jj = target
                while True:
                    rr = int(via[jj])
                    old = int(col4row[rr])
                    col4row[rr] = jj
                    row4col[jj] = rr
                    if rr == start:
                        break
                    jj = old
                col4row[i] = j
                row4col[j] = i
                break
        locked_col[col4row[i]] = True
    return col4row


_sap_jit = njit(cache=True)(_sap_loops)
_lapjv_jit = njit(cache=True)(_lapjv_loops)
_lex_jit = njit(cache=True)(_lex_loops)


def _equality_graph(cost, u, v):
    n = cost.shape[0]
    scale = max(1.0, float(np.max(np.abs(cost)))) if cost.size else 1.0
    tol = n * 1e-13 * scale
    return (cost - u[:, None] - v[None, :]) <= tol


def linear_assignment(cost, canonical=True):
    """Minimum-cost permutation for a square finite cost matrix.

    Returns ``(perm, u, v)`` where row ``i`` is assigned column ``perm[i]``
    and ``u``/``v`` are feasible dual potentials. With ``canonical`` the
    lexicographically smallest optimal permutation is returned.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    n = cost.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")

    sap = _lapjv_jit if _accel.USE_NUMBA else _sap_numpy
    perm, u, v, ok = sap(cost)
    if not ok:
        raise InfeasibleAssignment("no feasible assignment")
    if canonical and n > 1:
        eq = _equality_graph(cost, u, v)
        lex = _lex_jit if _accel.USE_NUMBA else _lex_numpy
        cand = lex(eq, perm.copy())
        # Accept only if not worse; guards against tolerance-level near-ties.
        if _fsum_le(cost, cand, perm):
            perm = cand
    return perm, u, v


def _fsum_le(cost, a, b):
    rows = np.arange(cost.shape[0])
    return math.fsum(cost[rows, a]) <= math.fsum(cost[rows, b])
