"""Compiled inner loops for chain simulation.

All kernels take the chain as flat arrays ``(up, rate, fv)`` plus whatever
else they need, and one Philox key per replica ``(seed, replica)``.  Draw
order inside a replica is fixed, so results depend only on the key.
"""
import numba as nb
import numpy as np

from .rng import BUFFER_SIZE, refill

FLAG_CENSORED = 1
FLAG_BOUNDARY = 2
FLAG_STOPPED = 4

_U64_0 = np.uint64(0)


@nb.njit(nogil=True, cache=True, inline="always")
def _uniform(k0, k1, ctr, buf, pos):
    if pos == BUFFER_SIZE:
        ctr = refill(k0, k1, ctr, buf)
        pos = 0
    return buf[pos], ctr, pos + 1


@nb.njit(nogil=True, cache=True, inline="always")
def _split(u, p):
    """Direction and a fresh uniform from a single draw.

    Given ``u < p`` (resp. ``u >= p``) the rescaled remainder is again uniform
    and independent of the direction, so one draw serves both the jump and
    the holding time.
    """
    if u < p:
        return 1, u / p
    return -1, (u - p) / (1.0 - p)


@nb.njit(nogil=True, cache=True)
def _excursion(up, rate, fv, absx, z, cap, k0, k1, ctr, buf, pos, tmax=np.inf):
    """One excursion from site ``z``; time at ``z`` itself is not included.

    Returns (length, area, amplitude, steps, flags, ctr, pos).  Once the
    length passes ``tmax`` the excursion is abandoned with ``FLAG_STOPPED``.
    """
    n = up.size
    u, ctr, pos = _uniform(k0, k1, ctr, buf, pos)
    x = z + 1 if u < up[z] else z - 1
    length = 0.0
    area = 0.0
    amp = 0.0
    steps = 0
    flags = 0
    while x != z:
        if x == 0 or x == n - 1:
            flags |= FLAG_BOUNDARY
        if steps >= cap:
            flags |= FLAG_CENSORED
            break
        if length > tmax:
            flags |= FLAG_STOPPED
            break
        u, ctr, pos = _uniform(k0, k1, ctr, buf, pos)
        d, v = _split(u, up[x])
        h = -np.log1p(-v) / rate[x]
        length += h
        area += fv[x] * h
        if absx[x] > amp:
            amp = absx[x]
        x += d
        steps += 1
    return length, area, amp, steps, flags, ctr, pos


@nb.njit(nogil=True, cache=True)
def excursions(up, rate, fv, absx, z, cap, seed, replica, ctr0, count, out_len, out_area, out_amp, out_flags):
    """``count`` consecutive excursions from one stream; returns total steps."""
    k0 = np.uint64(seed)
    k1 = np.uint64(replica)
    buf = np.empty(BUFFER_SIZE)
    ctr = np.uint64(ctr0)
    pos = BUFFER_SIZE
    total = 0
    for i in range(count):
        ln, ar, am, st, fl, ctr, pos = _excursion(up, rate, fv, absx, z, cap, k0, k1, ctr, buf, pos)
        out_len[i] = ln
        out_area[i] = ar
        out_amp[i] = am
        out_flags[i] = fl
        total += st
    return total


@nb.njit(nogil=True, cache=True)
def levy_blocks(up, rate, fv, absx, z, m, t_block, cap, seed, replica, ctr0, out_dtau, out_dz, out_count, out_flags):
    """Increments of (tau, Z) over consecutive blocks of ``t_block`` local time.

    Occupation of 0 per block is exactly ``m * t_block``; excursions start at
    the expiries of the exponential holding clock at 0.
    """
    k0 = np.uint64(seed)
    k1 = np.uint64(replica)
    buf = np.empty(BUFFER_SIZE)
    ctr = np.uint64(ctr0)
    pos = BUFFER_SIZE
    occ = m * t_block
    r0 = rate[z]
    for b in range(out_dtau.size):
        left = occ
        dtau = occ
        dz = 0.0
        cnt = 0
        fl = 0
        while True:
            u, ctr, pos = _uniform(k0, k1, ctr, buf, pos)
            # a zero rate at 0 (test doubles) means no excursion ever starts
            h = -np.log1p(-u) / r0 if r0 > 0.0 else np.inf
            if h > left:
                break
            left -= h
            ln, ar, am, st, f1, ctr, pos = _excursion(up, rate, fv, absx, z, cap, k0, k1, ctr, buf, pos)
            dtau += ln
            dz += ar
            cnt += 1
            fl |= f1
        out_dtau[b] = dtau
        out_dz[b] = dz
        out_count[b] = cnt
        out_flags[b] = fl
    return 0


@nb.njit(nogil=True, cache=True)
def first_passage(up, rate, fv, start, zeta0, barrier, horizon, seed, rep0, rep1, out_t, out_flags, out_steps):
    """First time ``zeta0 + int f(X)`` reaches ``barrier``; ``inf`` if not by ``horizon``.

    Replicas ``rep0 .. rep1-1`` are written to ``out_*[0 .. rep1-rep0-1]``.
    """
    n = up.size
    buf = np.empty(BUFFER_SIZE)
    k0 = np.uint64(seed)
    for r in range(rep0, rep1):
        k1 = np.uint64(r)
        ctr = _U64_0
        pos = BUFFER_SIZE
        x = start
        t = 0.0
        zeta = zeta0
        fl = 0
        steps = 0
        hit = np.inf
        # T = inf{t > 0 : zeta_t >= barrier}: no instant hit if zeta leaves the barrier downwards
        if zeta > barrier or (zeta == barrier and fv[x] >= 0.0):
            hit = 0.0
        while hit == np.inf:
            if x == 0 or x == n - 1:
                fl |= FLAG_BOUNDARY
            u, ctr, pos = _uniform(k0, k1, ctr, buf, pos)
            d, v = _split(u, up[x])
            h = -np.log1p(-v) / rate[x]
            slope = fv[x]
            end = t + h
            if end > horizon:
                h = horizon - t
            if slope > 0.0 and zeta + slope * h >= barrier:
                hit = t + (barrier - zeta) / slope
                break
            if end > horizon:
                fl |= FLAG_CENSORED
                break
            zeta += slope * h
            t = end
            x += d
            steps += 1
        out_t[r - rep0] = hit
        out_flags[r - rep0] = fl
        out_steps[r - rep0] = steps
    return 0


@nb.njit(nogil=True, cache=True)
def path(up, rate, start, horizon, seed, replica, ctr0, capacity):
    """Jump times and site indices of one path on ``[0, horizon]``.

    ``times[0] = 0``; the path sits at ``sites[k]`` on ``[times[k], times[k+1])``.
    """
    n = up.size
    k0 = np.uint64(seed)
    k1 = np.uint64(replica)
    buf = np.empty(BUFFER_SIZE)
    ctr = np.uint64(ctr0)
    pos = BUFFER_SIZE
    times = np.empty(capacity)
    sites = np.empty(capacity, dtype=np.int32)
    x = start
    t = 0.0
    k = 0
    fl = 0
    while True:
        if k == times.size:
            nt = np.empty(2 * times.size)
            ns = np.empty(2 * times.size, dtype=np.int32)
            nt[:k] = times
            ns[:k] = sites
            times = nt
            sites = ns
        times[k] = t
        sites[k] = x
        k += 1
        if x == 0 or x == n - 1:
            fl |= FLAG_BOUNDARY
        u, ctr, pos = _uniform(k0, k1, ctr, buf, pos)
        d, v = _split(u, up[x])
        t += -np.log1p(-v) / rate[x]
        if t > horizon:
            break
        x += d
    return times[:k].copy(), sites[:k].copy(), fl


@nb.njit(nogil=True, cache=True)
def decomposition_at_exponential(up, rate, fv, z, q, seed, rep0, rep1, out):
    """Path functionals at an independent Exp(q) time ``e``.

    ``out[r] = (e, zeta_e, xi_e, xi_g, zeta_g, flags)`` where ``g`` is the
    last visit to 0 before ``e``.  The Exp(q) time is the stream's first draw.
    """
    n = up.size
    buf = np.empty(BUFFER_SIZE)
    k0 = np.uint64(seed)
    for r in range(rep0, rep1):
        k1 = np.uint64(r)
        ctr = _U64_0
        pos = BUFFER_SIZE
        u, ctr, pos = _uniform(k0, k1, ctr, buf, pos)
        e = -np.log1p(-u) / q
        x = z
        t = 0.0
        zeta = 0.0
        xi = 0.0
        xi_g = 0.0
        zeta_g = 0.0
        fl = 0
        while True:
            if x == 0 or x == n - 1:
                fl |= FLAG_BOUNDARY
            if x == z:
                xi_g = xi
                zeta_g = zeta
            u, ctr, pos = _uniform(k0, k1, ctr, buf, pos)
            d, v = _split(u, up[x])
            h = -np.log1p(-v) / rate[x]
            if t + h >= e:
                zeta += fv[x] * (e - t)
                if zeta > xi:
                    xi = zeta
                break
            zeta += fv[x] * h
            if zeta > xi:
                xi = zeta
            t += h
            x += d
        i = r - rep0
        out[i, 0] = e
        out[i, 1] = zeta
        out[i, 2] = xi
        out[i, 3] = xi_g
        out[i, 4] = zeta_g
        out[i, 5] = fl
    return 0


@nb.njit(nogil=True, cache=True)
def local_time_grid(up, rate, fv, absx, z, m, t_grid, tau_stop, lt_min, cap, seed, rep0, rep1, out_tau, out_z, out_flags):
    """``(tau_t, Z_t)`` at the local times ``t_grid`` for each replica.

    A replica stops once its local time passes ``lt_min`` and ``tau`` passes
    ``tau_stop``; later grid entries get ``tau = inf`` and the last ``Z``.
    """
    buf = np.empty(BUFFER_SIZE)
    k0 = np.uint64(seed)
    ng = t_grid.size
    for r in range(rep0, rep1):
        i = r - rep0
        k1 = np.uint64(r)
        ctr = _U64_0
        pos = BUFFER_SIZE
        lt = 0.0
        tau = 0.0
        zz = 0.0
        j = 0
        fl = 0
        while j < ng:
            u, ctr, pos = _uniform(k0, k1, ctr, buf, pos)
            h = -np.log1p(-u) / rate[z]
            lt_end = lt + h / m
            while j < ng and t_grid[j] < lt_end:
                out_tau[i, j] = tau + (t_grid[j] - lt) * m
                out_z[i, j] = zz
                j += 1
            lt = lt_end
            tau += h
            if j == ng or (lt >= lt_min and tau >= tau_stop):
                break
            # past lt_min nothing after tau_stop matters, so the excursion may be cut there
            lim = tau_stop - tau if lt >= lt_min else np.inf
            ln, ar, am, st, f1, ctr, pos = _excursion(up, rate, fv, absx, z, cap, k0, k1, ctr, buf, pos, lim)
            fl |= f1 & ~FLAG_STOPPED
            tau += ln
            zz += ar
            if f1 & FLAG_STOPPED:
                break
        while j < ng:
            out_tau[i, j] = np.inf
            out_z[i, j] = zz
            j += 1
        out_flags[i] = fl
    return 0


@nb.njit(nogil=True, cache=True)
def area_walk(up, rate, fv, absx, z, cap, seed, replica, ctr0, max_steps, ladder_target, z_stop, step_budget):
    """Excursion areas of one stream, stopped early.

    Stops after ``max_steps`` excursions, once the strict running maximum of
    the partial sums has produced ``ladder_target`` records (0 excluded), or
    once it exceeds ``z_stop``.  More than ``step_budget`` chain steps in
    total sets the censored flag and stops.  Returns (areas, lengths, flags).
    """
    k0 = np.uint64(seed)
    k1 = np.uint64(replica)
    buf = np.empty(BUFFER_SIZE)
    ctr = np.uint64(ctr0)
    pos = BUFFER_SIZE
    cap_out = 1024
    areas = np.empty(cap_out)
    lens = np.empty(cap_out)
    s = 0.0
    best = 0.0
    records = 0
    k = 0
    fl = 0
    used = 0
    while k < max_steps:
        c = min(cap, step_budget - used)
        ln, ar, am, st, f1, ctr, pos = _excursion(up, rate, fv, absx, z, c, k0, k1, ctr, buf, pos)
        fl |= f1
        used += st
        if k == areas.size:
            na = np.empty(2 * areas.size)
            nl = np.empty(2 * areas.size)
            na[:k] = areas
            nl[:k] = lens
            areas = na
            lens = nl
        areas[k] = ar
        lens[k] = ln
        k += 1
        s += ar
        if s > best:
            best = s
            records += 1
            if records >= ladder_target or best > z_stop:
                break
        if used >= step_budget or f1 & FLAG_CENSORED:
            fl |= FLAG_CENSORED
            break
    return areas[:k].copy(), lens[:k].copy(), fl


@nb.njit(nogil=True, cache=True)
def excursion_path(up, rate, fv, absx, z, cap, seed, replica, ctr0):
    """First excursion of a stream with its path (same draws as ``_excursion``).

    Returns (site indices, holding times, flags); the last site is ``z``.
    """
    n = up.size
    k0 = np.uint64(seed)
    k1 = np.uint64(replica)
    buf = np.empty(BUFFER_SIZE)
    ctr = np.uint64(ctr0)
    pos = BUFFER_SIZE
    sites = np.empty(64, dtype=np.int32)
    holds = np.empty(64)
    u, ctr, pos = _uniform(k0, k1, ctr, buf, pos)
    x = z + 1 if u < up[z] else z - 1
    k = 0
    flags = 0
    while x != z:
        if x == 0 or x == n - 1:
            flags |= FLAG_BOUNDARY
        if k >= cap:
            flags |= FLAG_CENSORED
            break
        if k == sites.size - 1:
            ns = np.empty(2 * sites.size, dtype=np.int32)
            nh = np.empty(2 * sites.size)
            ns[:k] = sites[:k]
            nh[:k] = holds[:k]
            sites = ns
            holds = nh
        u, ctr, pos = _uniform(k0, k1, ctr, buf, pos)
        d, v = _split(u, up[x])
        sites[k] = x
        holds[k] = -np.log1p(-v) / rate[x]
        x += d
        k += 1
    sites[k] = x
    holds[k] = 0.0
    return sites[: k + 1].copy(), holds[: k + 1].copy(), flags
