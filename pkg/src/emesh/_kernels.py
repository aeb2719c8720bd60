"""Array kernels that advance a whole fabric by one tick.

All mesh state lives in numpy arrays owned by :class:`emesh.noc.Fabric`; the
functions here are the compiled inner loops.  Semantics match the object
model in :mod:`emesh.router` (see tests/test_reference_equivalence.py).

Tick phases:
  0. synthetic traffic generation (even ticks only)
  2. every router, raster order: per-output round-robin grant into its link
  3. links deliver into free downstream input slots; injection queues refill
     hub slots; chip-to-chip channels move packets on IO clocks
  4. hub ejection into nodes, at most one packet per node per cycle
Ready state read in phase 2 is only ever changed by the owning router in the
same phase, so the result does not depend on router visiting order.
"""

import numpy as np
from numba import njit

N, E, S, W, H = 0, 1, 2, 3, 4
OPP = np.array([2, 3, 0, 1, 4], dtype=np.int64)

LINK_TICKS = 2
EJECT_TICKS = 2
LINK_CAP = 2
PACKET_BYTES = 17.0

# integer parameter slots
IP_W, IP_H, IP_CROWS, IP_CCOLS, IP_QDEPTH, IP_IODEPTH = 0, 1, 2, 3, 4, 5
IP_GEN_KIND, IP_GEN_SIZE, IP_SEED, IP_HOT, IP_TRACE = 6, 7, 8, 9, 10
IP_WIN_START, IP_WIN_END, IP_XBITS, IP_YBITS, IP_NGP, IP_CHECK, IP_NFLOWS = 11, 12, 13, 14, 15, 16, 17
IP_LEN = 18
# float parameter slots
FP_RATE, FP_HOTFRAC, FP_IORATE, FP_IORATIO = 0, 1, 2, 3
FP_LEN = 4

# per-plane counters
C_INJ, C_DEL, C_WINJ, C_WDEL, C_WBYTES, C_WCUT, C_OFFERED, C_REFUSED = 0, 1, 2, 3, 4, 5, 6, 7
C_LATSUM, C_LATN, C_LATMIN, C_LATMAX = 8, 9, 10, 11
C_LEN = 12

# invariant violation counters
V_CONSERVATION, V_DIM_ORDER, V_POOL, V_TRACE_OVERFLOW, V_IO_OVERRUN = 0, 1, 2, 3, 4
V_LEN = 5

# trace event kinds
EV_INJECT, EV_HOP, EV_EJECT = 0, 1, 2

# traffic patterns
UNIFORM_RANDOM, NEAREST_NEIGHBOR, TRANSPOSE, BIT_REVERSAL, HOTSPOT, MIRROR_HALVES = 0, 1, 2, 3, 4, 5

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_K1 = np.uint64(0xBF58476D1CE4E5B9)
_K2 = np.uint64(0x94D049BB133111EB)
_K3 = np.uint64(0xD6E8FEB86659FD93)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def mix64(seed, cycle, node, stream):
    """Counter-based hash: a pure function of its four integer inputs."""
    z = (np.uint64(seed) * _GOLD + np.uint64(cycle) * _K1
         + np.uint64(node) * _K2 + np.uint64(stream) * _K3)
    z = (z ^ (z >> _S30)) * _K1
    z = (z ^ (z >> _S27)) * _K2
    return z ^ (z >> _S31)


@njit(cache=True)
def unit(seed, cycle, node, stream):
    return np.float64(mix64(seed, cycle, node, stream) >> _S11) * _INV53


@njit(cache=True)
def pattern_dest(kind, n, w, h, seed, cycle, hot, hot_frac):
    """Destination router for node *n* this cycle, or -1 for no packet."""
    total = w * h
    x = n % w
    y = n // w
    if kind == HOTSPOT:
        if hot != n and unit(seed, cycle, n, 2) < hot_frac:
            return hot
        kind = UNIFORM_RANDOM
    if kind == UNIFORM_RANDOM:
        if total == 1:
            return -1
        k = np.int64(mix64(seed, cycle, n, 1) % np.uint64(total - 1))
        return k if k < n else k + 1
    if kind == NEAREST_NEIGHBOR:
        cand = np.empty(4, dtype=np.int64)
        c = 0
        if y > 0:
            cand[c] = n - w
            c += 1
        if x < w - 1:
            cand[c] = n + 1
            c += 1
        if y < h - 1:
            cand[c] = n + w
            c += 1
        if x > 0:
            cand[c] = n - 1
            c += 1
        if c == 0:
            return -1
        return cand[np.int64(mix64(seed, cycle, n, 1) % np.uint64(c))]
    if kind == TRANSPOSE:
        if w != h or x == y:
            return -1
        return x * w + y
    if kind == BIT_REVERSAL:
        bits = 0
        while (1 << bits) < total:
            bits += 1
        if (1 << bits) != total:
            return -1
        d = 0
        for b in range(bits):
            if n & (1 << b):
                d |= 1 << (bits - 1 - b)
        return -1 if d == n else d
    if kind == MIRROR_HALVES:
        d = (h - 1 - y) * w + x
        return -1 if d == n else d
    return -1


@njit(cache=True)
def route_dir(rx, ry, dx, dy):
    if dy > ry:
        return S
    if dy < ry:
        return N
    if dx > rx:
        return E
    if dx < rx:
        return W
    return H


@njit(cache=True)
def trace_event(tr_i, tr_u, tr_c, tr_n, viol, t, p, kind, r, d, pid, p_addr, p_payload, p_ctrl):
    k = tr_n[0]
    if k >= tr_i.shape[0]:
        viol[V_TRACE_OVERFLOW] += 1
        return
    tr_i[k, 0] = t
    tr_i[k, 1] = p
    tr_i[k, 2] = kind
    tr_i[k, 3] = r
    tr_i[k, 4] = d
    tr_u[k, 0] = p_addr[pid]
    tr_u[k, 1] = p_payload[pid]
    tr_c[k] = p_ctrl[pid]
    tr_n[0] = k + 1


@njit(cache=True)
def inject_pid(p, n, pid, cycle, q_depth, rx, ry, p_dx, p_dy,
               slot, sroute, iq, iqn, last_inj, last_node_send):
    """Hub-side injection of an allocated packet; False means push-back."""
    if last_inj[p, n] == cycle:
        return False
    if slot[p, n, H] < 0 and iqn[p, n] == 0:
        slot[p, n, H] = pid
        sroute[p, n, H] = route_dir(rx[n], ry[n], p_dx[pid], p_dy[pid])
    elif iqn[p, n] < q_depth:
        iq[p, n, iqn[p, n]] = pid
        iqn[p, n] += 1
    else:
        return False
    last_inj[p, n] = cycle
    last_node_send[n] = cycle
    return True


@njit(cache=True)
def _alloc(free_ids, free_top, viol):
    top = free_top[0]
    if top == 0:
        viol[V_POOL] += 1
        return -1
    free_top[0] = top - 1
    return free_ids[top - 1]


@njit(cache=True)
def _release(pid, free_ids, free_top):
    free_ids[free_top[0]] = pid
    free_top[0] += 1


@njit(cache=True)
def _synth(t, cycle, src, dst, p, size, ip, cnt, viol, rx, ry,
           slot, sroute, iq, iqn, last_inj, last_node_send,
           p_dst, p_dx, p_dy, p_plane, p_t0, p_hops, p_size, p_synth, p_ew,
           p_addr, p_payload, p_ctrl, free_ids, free_top,
           tr_i, tr_u, tr_c, tr_n):
    cnt[p, C_OFFERED] += 1
    pid = _alloc(free_ids, free_top, viol)
    if pid < 0:
        cnt[p, C_REFUSED] += 1
        return
    p_dst[pid] = dst
    p_dx[pid] = rx[dst]
    p_dy[pid] = ry[dst]
    p_plane[pid] = p
    p_t0[pid] = t
    p_hops[pid] = 0
    p_size[pid] = size
    p_synth[pid] = 1
    p_ew[pid] = 0
    xs = np.uint64(20)
    ys = np.uint64(20 + ip[IP_XBITS])
    p_addr[pid] = (np.uint64(ry[dst]) << ys) | (np.uint64(rx[dst]) << xs)
    code = 0
    while (1 << code) < size:
        code += 1
    if p == 0:
        # inert read request carrying the source as its return address
        p_payload[pid] = (np.uint64(ry[src]) << ys) | (np.uint64(rx[src]) << xs)
        p_ctrl[pid] = code << 1
    else:
        p_payload[pid] = mix64(ip[IP_SEED], cycle, src, 7)
        if size < 8:
            p_payload[pid] &= (np.uint64(1) << np.uint64(8 * size)) - np.uint64(1)
        p_ctrl[pid] = 1 | (code << 1)
    ok = inject_pid(p, src, pid, cycle, ip[IP_QDEPTH], rx, ry, p_dx, p_dy,
                    slot, sroute, iq, iqn, last_inj, last_node_send)
    if not ok:
        cnt[p, C_REFUSED] += 1
        _release(pid, free_ids, free_top)
        return
    cnt[p, C_INJ] += 1
    if ip[IP_WIN_START] <= t < ip[IP_WIN_END]:
        cnt[p, C_WINJ] += 1
    if ip[IP_TRACE] != 0:
        trace_event(tr_i, tr_u, tr_c, tr_n, viol, t, p, EV_INJECT, src, H, pid,
                    p_addr, p_payload, p_ctrl)


@njit(cache=True)
def tick(t, ip, fp, gen_planes, fl_src, fl_dst, fl_plane, fl_rate,
         rx, ry, nbr, iol, io_dst, io_dir,
         slot, sroute, rr, last_send, lq, lqt, lqn, iq, iqn, last_inj, accept,
         last_recv, ej_rr, last_node_send, ioq, ioqt, ion, iocred,
         p_dst, p_dx, p_dy, p_plane, p_t0, p_hops, p_size, p_synth, p_ew,
         p_addr, p_payload, p_ctrl, free_ids, free_top,
         cnt, hist, link_use, viol, dl, dl_n, tr_i, tr_u, tr_c, tr_n):
    n_planes = slot.shape[0]
    n_routers = slot.shape[1]
    n_io = ion.shape[0]
    cycle = t // 2
    in_window = ip[IP_WIN_START] <= t < ip[IP_WIN_END]
    tracing = ip[IP_TRACE] != 0
    width = ip[IP_W]
    height = ip[IP_H]
    cut_row = height // 2 if height % 2 == 0 and height >= 2 else -1

    # phase 0: synthetic traffic
    if t % 2 == 0:
        kind = ip[IP_GEN_KIND]
        if kind >= 0:
            rate = fp[FP_RATE]
            seed = ip[IP_SEED]
            ngp = ip[IP_NGP]
            for n in range(n_routers):
                if last_node_send[n] == cycle:
                    continue
                if unit(seed, cycle, n, 0) >= rate:
                    continue
                d = pattern_dest(kind, n, width, height, seed, cycle, ip[IP_HOT], fp[FP_HOTFRAC])
                if d < 0:
                    continue
                if ngp > 0:
                    p = gen_planes[(cycle + n) % ngp]
                else:
                    same = (rx[n] // ip[IP_CCOLS] == rx[d] // ip[IP_CCOLS]
                            and ry[n] // ip[IP_CROWS] == ry[d] // ip[IP_CROWS])
                    p = 1 if same else 2
                _synth(t, cycle, n, d, p, ip[IP_GEN_SIZE], ip, cnt, viol, rx, ry,
                       slot, sroute, iq, iqn, last_inj, last_node_send,
                       p_dst, p_dx, p_dy, p_plane, p_t0, p_hops, p_size, p_synth, p_ew,
                       p_addr, p_payload, p_ctrl, free_ids, free_top, tr_i, tr_u, tr_c, tr_n)
        for f in range(ip[IP_NFLOWS]):
            n = fl_src[f]
            if last_node_send[n] == cycle:
                continue
            if unit(ip[IP_SEED], cycle, n, 100 + f) >= fl_rate[f]:
                continue
            _synth(t, cycle, n, fl_dst[f], fl_plane[f], 8, ip, cnt, viol, rx, ry,
                   slot, sroute, iq, iqn, last_inj, last_node_send,
                   p_dst, p_dx, p_dy, p_plane, p_t0, p_hops, p_size, p_synth, p_ew,
                   p_addr, p_payload, p_ctrl, free_ids, free_top, tr_i, tr_u, tr_c, tr_n)

    io_depth = ip[IP_IODEPTH]

    # phase 2: switch allocation and link issue
    for p in range(n_planes):
        if cnt[p, C_INJ] == cnt[p, C_DEL]:
            continue
        for r in range(n_routers):
            if (slot[p, r, 0] < 0 and slot[p, r, 1] < 0 and slot[p, r, 2] < 0
                    and slot[p, r, 3] < 0 and slot[p, r, 4] < 0):
                continue
            for o in range(5):
                if t - last_send[p, r, o] < 2:
                    continue
                chan = -1
                if o == H:
                    if lqn[p, r, o] >= LINK_CAP:
                        continue
                else:
                    chan = iol[r, o]
                    if chan >= 0:
                        if ion[chan] >= io_depth:
                            continue
                    elif lqn[p, r, o] >= LINK_CAP:
                        continue
                base = rr[p, r, o]
                g = -1
                for k in range(5):
                    d = (base + k) % 5
                    if slot[p, r, d] >= 0 and sroute[p, r, d] == o:
                        g = d
                        break
                if g < 0:
                    continue
                pid = slot[p, r, g]
                slot[p, r, g] = -1
                rr[p, r, o] = (g + 1) % 5
                last_send[p, r, o] = t
                if o != H:
                    p_hops[pid] += 1
                    if o == N or o == S:
                        if p_ew[pid] != 0:
                            viol[V_DIM_ORDER] += 1
                    else:
                        p_ew[pid] = 1
                    if in_window:
                        link_use[p, r, o] += 1
                        if cut_row > 0 and ((o == S and ry[r] == cut_row - 1)
                                            or (o == N and ry[r] == cut_row)):
                            cnt[p, C_WCUT] += p_size[pid]
                    if tracing:
                        trace_event(tr_i, tr_u, tr_c, tr_n, viol, t, p, EV_HOP, r, o, pid,
                                    p_addr, p_payload, p_ctrl)
                if chan >= 0:
                    k = ion[chan]
                    ioq[chan, k] = pid
                    ioqt[chan, k] = t + LINK_TICKS
                    ion[chan] = k + 1
                else:
                    k = lqn[p, r, o]
                    lq[p, r, o, k] = pid
                    lqt[p, r, o, k] = t + (EJECT_TICKS if o == H else LINK_TICKS)
                    lqn[p, r, o] = k + 1

    # phase 3: links into downstream slots, injection queues into hub slots
    for p in range(n_planes):
        if cnt[p, C_INJ] == cnt[p, C_DEL]:
            continue
        for r in range(n_routers):
            for o in range(4):
                if lqn[p, r, o] == 0 or lqt[p, r, o, 0] > t:
                    continue
                dn = nbr[r, o]
                di = OPP[o]
                if slot[p, dn, di] >= 0:
                    continue
                pid = lq[p, r, o, 0]
                slot[p, dn, di] = pid
                sroute[p, dn, di] = route_dir(rx[dn], ry[dn], p_dx[pid], p_dy[pid])
                lq[p, r, o, 0] = lq[p, r, o, 1]
                lqt[p, r, o, 0] = lqt[p, r, o, 1]
                lqn[p, r, o] -= 1
            if slot[p, r, H] < 0 and iqn[p, r] > 0:
                pid = iq[p, r, 0]
                slot[p, r, H] = pid
                sroute[p, r, H] = route_dir(rx[r], ry[r], p_dx[pid], p_dy[pid])
                for k in range(iqn[p, r] - 1):
                    iq[p, r, k] = iq[p, r, k + 1]
                iqn[p, r] -= 1

    if n_io > 0 and t % 2 == 0:
        ratio = fp[FP_IORATIO]
        clocks = np.int64(np.floor((cycle + 1) * ratio)) - np.int64(np.floor(cycle * ratio))
        rate = fp[FP_IORATE]
        for c in range(n_io):
            for _ in range(clocks):
                cred = iocred[c] + rate
                if cred > PACKET_BYTES:
                    cred = PACKET_BYTES
                iocred[c] = cred
                if ion[c] == 0 or ioqt[c, 0] > t or cred < PACKET_BYTES:
                    continue
                pid = ioq[c, 0]
                p = p_plane[pid]
                dn = io_dst[c]
                di = io_dir[c]
                if slot[p, dn, di] >= 0:
                    continue
                slot[p, dn, di] = pid
                sroute[p, dn, di] = route_dir(rx[dn], ry[dn], p_dx[pid], p_dy[pid])
                for k in range(ion[c] - 1):
                    ioq[c, k] = ioq[c, k + 1]
                    ioqt[c, k] = ioqt[c, k + 1]
                ion[c] -= 1
                iocred[c] = 0.0

    # phase 4: hub ejection, one packet per node per cycle over all planes
    nb = hist.shape[1]
    for r in range(n_routers):
        if t - last_recv[r] < 2:
            continue
        for k in range(n_planes):
            p = (ej_rr[r] + k) % n_planes
            if lqn[p, r, H] == 0 or lqt[p, r, H, 0] > t or accept[p, r] == 0:
                continue
            pid = lq[p, r, H, 0]
            lq[p, r, H, 0] = lq[p, r, H, 1]
            lqt[p, r, H, 0] = lqt[p, r, H, 1]
            lqn[p, r, H] -= 1
            ej_rr[r] = (p + 1) % n_planes
            last_recv[r] = t
            cnt[p, C_DEL] += 1
            if in_window:
                lat = t - p_t0[pid]
                cnt[p, C_WDEL] += 1
                cnt[p, C_WBYTES] += p_size[pid]
                cnt[p, C_LATSUM] += lat
                cnt[p, C_LATN] += 1
                if cnt[p, C_LATN] == 1 or lat < cnt[p, C_LATMIN]:
                    cnt[p, C_LATMIN] = lat
                if lat > cnt[p, C_LATMAX]:
                    cnt[p, C_LATMAX] = lat
                hist[p, lat if lat < nb else nb - 1] += 1
            if tracing:
                trace_event(tr_i, tr_u, tr_c, tr_n, viol, t, p, EV_EJECT, r, H, pid,
                            p_addr, p_payload, p_ctrl)
            if p_synth[pid] != 0:
                _release(pid, free_ids, free_top)
            else:
                j = dl_n[0]
                dl[j, 0] = pid
                dl[j, 1] = p
                dl[j, 2] = r
                dl[j, 3] = t
                dl_n[0] = j + 1
            break

    if ip[IP_CHECK] != 0:
        check_conservation(cnt, viol, slot, lqn, iqn, ion, ioq, p_plane)


@njit(cache=True)
def check_conservation(cnt, viol, slot, lqn, iqn, ion, ioq, p_plane):
    """Recount every buffer and compare with injected - delivered."""
    n_planes = slot.shape[0]
    held = np.zeros(n_planes, dtype=np.int64)
    for p in range(n_planes):
        s = 0
        for r in range(slot.shape[1]):
            for d in range(5):
                if slot[p, r, d] >= 0:
                    s += 1
                s += lqn[p, r, d]
            s += iqn[p, r]
        held[p] = s
    for c in range(ion.shape[0]):
        for k in range(ion[c]):
            held[p_plane[ioq[c, k]]] += 1
    for p in range(n_planes):
        if held[p] != cnt[p, C_INJ] - cnt[p, C_DEL]:
            viol[V_CONSERVATION] += 1


@njit(cache=True)
def run(t0, n_ticks, stop_on_delivery, ip, fp, gen_planes, fl_src, fl_dst, fl_plane, fl_rate,
        rx, ry, nbr, iol, io_dst, io_dir,
        slot, sroute, rr, last_send, lq, lqt, lqn, iq, iqn, last_inj, accept,
        last_recv, ej_rr, last_node_send, ioq, ioqt, ion, iocred,
        p_dst, p_dx, p_dy, p_plane, p_t0, p_hops, p_size, p_synth, p_ew,
        p_addr, p_payload, p_ctrl, free_ids, free_top,
        cnt, hist, link_use, viol, dl, dl_n, tr_i, tr_u, tr_c, tr_n):
    """Advance up to *n_ticks*; returns the number of ticks executed.

    Stops early when host-side buffers (deliveries, trace) need draining.
    """
    margin = slot.shape[1]
    tr_margin = slot.shape[0] * slot.shape[1] * 7 + ion.shape[0] + ip[IP_NFLOWS]
    for i in range(n_ticks):
        tick(t0 + i, ip, fp, gen_planes, fl_src, fl_dst, fl_plane, fl_rate,
             rx, ry, nbr, iol, io_dst, io_dir,
             slot, sroute, rr, last_send, lq, lqt, lqn, iq, iqn, last_inj, accept,
             last_recv, ej_rr, last_node_send, ioq, ioqt, ion, iocred,
             p_dst, p_dx, p_dy, p_plane, p_t0, p_hops, p_size, p_synth, p_ew,
             p_addr, p_payload, p_ctrl, free_ids, free_top,
             cnt, hist, link_use, viol, dl, dl_n, tr_i, tr_u, tr_c, tr_n)
        if dl_n[0] > 0 and (stop_on_delivery or dl_n[0] + margin > dl.shape[0]):
            return i + 1
        if ip[IP_TRACE] != 0 and tr_n[0] + tr_margin > tr_i.shape[0]:
            return i + 1
    return n_ticks
