"""Event loop for the closed-network CTMC.

Between events the chain is homogeneous: each engaged server completes
matches at its region's current demand rate, each traveling car finishes at
rate eta_n. Every event changes the workload W = sum(Q), so demand rates are
recomputed from the value table after each step (the table is indexed by W
directly because reachable workloads are the integers 0..n).

Holding costs are integrated exactly between events; revenue is booked at
service-completion epochs at the price in force. The post-warmup window of a
straddling interval is accounted proportionally.

Error codes: 0 ok, 1 empty event space, 2 negative count, 3 conservation.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._rng import rng_next
from .policies import assign_on_arrival, select_activity

# accumulator layout: [0] revenue, [1] holding, [2] int Q0 dt, [3] int W dt,
# [4:4+I] idle hours per server, [4+I:4+I+J] busy hours per activity
ACC_REVENUE = 0
ACC_HOLDING = 1
ACC_Q0_TIME = 2
ACC_W_TIME = 3
ACC_FIXED = 4


@njit(cache=True, nogil=True)
def run_events(
    act_server, act_buffer, q_cum, eta_n, n_fleet,
    lam_base, dem_a_n, dem_b_n, price_coef, lam_lo, lam_hi, v_table,
    h0_n, h_n,
    code, safety, local_act, cand_start, cand_list, cand2_start, cand2_list,
    split_w, bufcand_start, bufcand_list, h_buf,
    t_end, warmup, max_events,
    Q, committed, server_act, state_i, state_f, rng_state, acc, served,
):
    I = Q.shape[0]
    t = state_f[0]
    events_left = max_events
    lam_cur = np.empty(I)
    n_table = v_table.shape[0]

    while t < t_end and events_left != 0:
        W = np.int64(0)
        for i in range(I):
            W += Q[i]
        idx = W if W < n_table else n_table - 1
        v = v_table[idx]

        total = eta_n * state_i[0]
        for i in range(I):
            if server_act[i] >= 0:
                lam = lam_base[i] + price_coef[i] * v
                if lam < lam_lo[i]:
                    lam = lam_lo[i]
                elif lam > lam_hi[i]:
                    lam = lam_hi[i]
                lam_cur[i] = lam
                total += lam
        if total <= 0.0:
            return 1

        dt = -np.log(rng_next(rng_state)) / total
        truncated = t + dt >= t_end
        if truncated:
            dt = t_end - t
        t_next = t + dt

        # post-warmup share of (t, t_next]
        pw = 0.0
        if t_next > warmup:
            pw = dt if t >= warmup else t_next - warmup
        if pw > 0.0:
            hold = h0_n * state_i[0]
            Wf = 0.0
            for i in range(I):
                hold += h_n[i] * Q[i]
                Wf += Q[i]
            acc[ACC_HOLDING] += pw * hold
            acc[ACC_Q0_TIME] += pw * state_i[0]
            acc[ACC_W_TIME] += pw * Wf
            for i in range(I):
                if server_act[i] < 0:
                    acc[ACC_FIXED + i] += pw
                else:
                    acc[ACC_FIXED + I + server_act[i]] += pw
        t = t_next
        if truncated:
            break

        state_i[1] += 1
        if events_left > 0:
            events_left -= 1

        u = rng_next(rng_state) * total
        chosen = -1
        cum = 0.0
        for i in range(I):
            if server_act[i] >= 0:
                cum += lam_cur[i]
                if u < cum:
                    chosen = i
                    break

        if chosen >= 0:
            # service completion: car matched in region `chosen`
            j = server_act[chosen]
            b = act_buffer[j]
            if t >= warmup:
                acc[ACC_REVENUE] += (dem_a_n[chosen] - lam_cur[chosen]) / dem_b_n[chosen]
                served[chosen] += 1
            Q[b] -= 1
            committed[b] -= 1
            state_i[0] += 1
            if Q[b] < 0 or committed[b] < 0:
                return 2
            jn = select_activity(code, chosen, Q, committed, act_buffer, local_act,
                                 cand_start, cand_list, cand2_start, cand2_list,
                                 safety, h_buf, split_w, rng_state)
            if jn >= 0:
                server_act[chosen] = jn
                committed[act_buffer[jn]] += 1
            else:
                server_act[chosen] = -1
        else:
            # travel completion: route car to a buffer
            u3 = rng_next(rng_state)
            d = I - 1
            for i in range(I):
                if u3 <= q_cum[i]:
                    d = i
                    break
            state_i[0] -= 1
            if state_i[0] < 0:
                return 2
            Q[d] += 1
            if t >= warmup:
                served[I] += 1
            ja = assign_on_arrival(code, d, Q, committed, server_act, act_server,
                                   act_buffer, safety, local_act,
                                   bufcand_start, bufcand_list)
            if ja >= 0:
                server_act[act_server[ja]] = ja
                committed[d] += 1

        tot = state_i[0]
        for i in range(I):
            tot += Q[i]
        if tot != n_fleet:
            return 3

    state_f[0] = t
    return 0
