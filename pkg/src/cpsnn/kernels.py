"""Hot per-timestep recurrence loops.

Every function here operates on raw float64 arrays with time as the leading
axis, shapes ``(T, B, C)`` for inputs and ``(T, B, H)`` for hidden records.
They are compiled with numba unless ``CPSNN_BACKEND=numpy`` is set (see
:mod:`cpsnn.backend`); the source is restricted to the numpy subset numba
supports so both paths share one implementation.

Weight matrices are passed pre-transposed (input-dim first) so every matmul
runs on C-contiguous operands:

* ``w_in_t``  -- ``(C, H)``, transpose of the synaptic weights ``(H, C)``
* ``wc_s_t``  -- ``(C, C)``, transpose of the controller block acting on spikes
* ``wc_z_t``  -- ``(C, C)``, transpose of the controller block acting on the
  slow trace; ``wc_z`` is the untransposed block, needed in the backward pass
* ``u_t``     -- ``(C, H)``, transpose of the adaptive-baseline decay weights

Gradients for the transposed matrices are returned in transposed layout as
well; callers transpose them back.
"""

import numpy as np

from .backend import jit_kernel


@jit_kernel
def cpsnn_forward(s_seq, v0, f0, z0, w_in_t, wc_s_t, wc_z_t, b_c,
                  lam_f, lam_s, alpha_m, alpha_f, alpha_s, theta, width,
                  warp_floor, no_warp, use_fast, use_slow, soft):
    """Run the warped-trace forward recurrence over a batch.

    Returns per-step records sufficient for exact reverse-mode replay:
    fast trace, slow trace (with the initial state at index 0), warp factor,
    synaptic current, pre-reset membrane, spikes, and the time-averaged
    hidden spike rates.
    """
    T, B, C = s_seq.shape
    H = w_in_t.shape[1]
    log_as = np.log(alpha_s)

    f_rec = np.empty((T, B, C))
    z_rec = np.empty((T + 1, B, C))
    w_rec = np.empty((T, B, C))
    cur_rec = np.empty((T, B, H))
    pre_rec = np.empty((T, B, H))
    spk_rec = np.empty((T, B, H))

    z_rec[0] = z0
    v = v0.copy()
    f = f0.copy()
    spk_sum = np.zeros((B, H))

    for t in range(T):
        s = s_seq[t]
        f = alpha_f * f + s
        z_prev = z_rec[t]
        if no_warp:
            w = np.ones((B, C))
        else:
            u = np.dot(s, wc_s_t) + np.dot(z_prev, wc_z_t) + b_c
            w = warp_floor + (1.0 - warp_floor) / (1.0 + np.exp(-u))
        z = np.exp(w * log_as) * z_prev + s

        drive = s.copy()
        if use_fast:
            drive = drive + lam_f * f
        if use_slow:
            drive = drive + lam_s * z
        cur = np.dot(drive, w_in_t)

        pre = alpha_m * v + (1.0 - alpha_m) * cur
        if soft:
            spk = 1.0 / (1.0 + np.exp(-(pre - theta) / width))
        else:
            spk = (pre > theta).astype(np.float64)
        v = (1.0 - spk) * pre

        f_rec[t] = f
        z_rec[t + 1] = z
        w_rec[t] = w
        cur_rec[t] = cur
        pre_rec[t] = pre
        spk_rec[t] = spk
        spk_sum += spk

    rates = spk_sum / T
    return f_rec, z_rec, w_rec, cur_rec, pre_rec, spk_rec, rates


@jit_kernel
def cpsnn_backward(s_seq, f_rec, z_rec, w_rec, pre_rec, spk_rec, g_h_base,
                   w_in, wc_z, lam_f, lam_s, alpha_m, alpha_f, alpha_s,
                   theta, width, warp_floor, no_warp, use_fast, use_slow,
                   soft, detach_reset):
    """Exact reverse-mode sweep over a recorded forward pass.

    ``g_h_base`` is the loss gradient with respect to each per-step hidden
    spike vector (the rate-readout contribution, already divided by T).
    Returns gradients for the input weights (transposed layout), both
    controller blocks (transposed), the controller bias, the two mixing
    coefficients, and per-step L2 norms of the carried state adjoints.
    Profile entry ``t`` is the sensitivity of the loss to the state entering
    step ``t``.
    """
    T, B, C = s_seq.shape
    H = w_in.shape[0]
    log_as = np.log(alpha_s)

    g_w_in_t = np.zeros((C, H))
    g_wc_s_t = np.zeros((C, C))
    g_wc_z_t = np.zeros((C, C))
    g_b_c = np.zeros(C)
    g_lam_f = 0.0
    g_lam_s = 0.0

    prof_v = np.empty(T)
    prof_f = np.empty(T)
    prof_z = np.empty(T)

    gv = np.zeros((B, H))
    gf = np.zeros((B, C))
    gz = np.zeros((B, C))

    for t in range(T - 1, -1, -1):
        s = s_seq[t]
        pre = pre_rec[t]
        spk = spk_rec[t]

        gh = g_h_base.copy()
        if not detach_reset:
            gh = gh - pre * gv
        if soft:
            sg = spk * (1.0 - spk) / width
        else:
            sg = np.maximum(0.0, 1.0 - np.abs(pre - theta) / width) / width
        gp = (1.0 - spk) * gv + sg * gh

        g_cur = (1.0 - alpha_m) * gp
        gv = alpha_m * gp

        g_drive = np.dot(g_cur, w_in)
        drive = s.copy()
        if use_fast:
            drive = drive + lam_f * f_rec[t]
        if use_slow:
            drive = drive + lam_s * z_rec[t + 1]
        g_w_in_t += np.dot(np.ascontiguousarray(drive.T), g_cur)

        gf_tot = gf
        if use_fast:
            g_lam_f += np.sum(g_drive * f_rec[t])
            gf_tot = gf + lam_f * g_drive
        gz_tot = gz
        if use_slow:
            g_lam_s += np.sum(g_drive * z_rec[t + 1])
            gz_tot = gz + lam_s * g_drive

        gf = alpha_f * gf_tot

        z_prev = z_rec[t]
        w = w_rec[t]
        decay = np.exp(w * log_as)
        gz = decay * gz_tot
        if not no_warp:
            g_warp = gz_tot * z_prev * decay * log_as
            # chain through w = floor + (1-floor)*sigmoid(u)
            sig = (w - warp_floor) / (1.0 - warp_floor)
            gu = g_warp * (1.0 - warp_floor) * sig * (1.0 - sig)
            g_b_c += np.sum(gu, axis=0)
            g_wc_s_t += np.dot(np.ascontiguousarray(s.T), gu)
            g_wc_z_t += np.dot(np.ascontiguousarray(z_prev.T), gu)
            gz = gz + np.dot(gu, wc_z)

        prof_v[t] = np.sqrt(np.sum(gv * gv))
        prof_f[t] = np.sqrt(np.sum(gf * gf))
        prof_z[t] = np.sqrt(np.sum(gz * gz))

    return (g_w_in_t, g_wc_s_t, g_wc_z_t, g_b_c, g_lam_f, g_lam_s,
            prof_v, prof_f, prof_z)


@jit_kernel
def cpsnn_stream(n_steps, s_buf, v, f, z, w_in_t, wc_s_t, wc_z_t, b_c,
                 lam_f, lam_s, alpha_m, alpha_f, alpha_s, theta, width,
                 warp_floor, no_warp, use_fast, use_slow):
    """Streaming inference with no per-step recording.

    Cycles through the rows of ``s_buf`` as input, mutating the state arrays
    in place; live state stays constant regardless of ``n_steps``. Returns
    the total hidden spike count.
    """
    P = s_buf.shape[0]
    log_as = np.log(alpha_s)
    count = 0.0
    for t in range(n_steps):
        s = s_buf[t % P]
        f[:] = alpha_f * f + s
        if no_warp:
            w = np.ones_like(z)
        else:
            u = np.dot(s, wc_s_t) + np.dot(z, wc_z_t) + b_c
            w = warp_floor + (1.0 - warp_floor) / (1.0 + np.exp(-u))
        z[:] = np.exp(w * log_as) * z + s
        drive = s.copy()
        if use_fast:
            drive = drive + lam_f * f
        if use_slow:
            drive = drive + lam_s * z
        cur = np.dot(drive, w_in_t)
        pre = alpha_m * v + (1.0 - alpha_m) * cur
        spk = (pre > theta).astype(np.float64)
        v[:] = (1.0 - spk) * pre
        count += np.sum(spk)
    return count


@jit_kernel
def fixed_forward(s_seq, v0, w_in_t, alpha_m, theta, width, soft):
    """Plain leaky integrate-and-fire recurrence (current = weights @ spikes)."""
    T, B, C = s_seq.shape
    H = w_in_t.shape[1]
    pre_rec = np.empty((T, B, H))
    spk_rec = np.empty((T, B, H))
    v = v0.copy()
    spk_sum = np.zeros((B, H))
    for t in range(T):
        cur = np.dot(s_seq[t], w_in_t)
        pre = alpha_m * v + (1.0 - alpha_m) * cur
        if soft:
            spk = 1.0 / (1.0 + np.exp(-(pre - theta) / width))
        else:
            spk = (pre > theta).astype(np.float64)
        v = (1.0 - spk) * pre
        pre_rec[t] = pre
        spk_rec[t] = spk
        spk_sum += spk
    rates = spk_sum / T
    return pre_rec, spk_rec, rates


@jit_kernel
def fixed_backward(s_seq, pre_rec, spk_rec, g_h_base, alpha_m, theta, width,
                   soft, detach_reset):
    T, B, C = s_seq.shape
    H = pre_rec.shape[2]
    g_w_in_t = np.zeros((C, H))
    prof_v = np.empty(T)
    gv = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        pre = pre_rec[t]
        spk = spk_rec[t]
        gh = g_h_base.copy()
        if not detach_reset:
            gh = gh - pre * gv
        if soft:
            sg = spk * (1.0 - spk) / width
        else:
            sg = np.maximum(0.0, 1.0 - np.abs(pre - theta) / width) / width
        gp = (1.0 - spk) * gv + sg * gh
        g_cur = (1.0 - alpha_m) * gp
        gv = alpha_m * gp
        g_w_in_t += np.dot(np.ascontiguousarray(s_seq[t].T), g_cur)
        prof_v[t] = np.sqrt(np.sum(gv * gv))
    return g_w_in_t, prof_v


@jit_kernel
def adaptive_forward(s_seq, v0, w_in_t, u_t, a, theta, width, soft, unscaled):
    """LIF recurrence with a per-neuron input-conditioned membrane decay."""
    T, B, C = s_seq.shape
    H = w_in_t.shape[1]
    v_rec = np.empty((T + 1, B, H))
    al_rec = np.empty((T, B, H))
    pre_rec = np.empty((T, B, H))
    spk_rec = np.empty((T, B, H))
    v_rec[0] = v0
    spk_sum = np.zeros((B, H))
    for t in range(T):
        s = s_seq[t]
        cur = np.dot(s, w_in_t)
        al = 1.0 / (1.0 + np.exp(-(np.dot(s, u_t) + a)))
        if unscaled:
            pre = al * v_rec[t] + cur
        else:
            pre = al * v_rec[t] + (1.0 - al) * cur
        if soft:
            spk = 1.0 / (1.0 + np.exp(-(pre - theta) / width))
        else:
            spk = (pre > theta).astype(np.float64)
        v_rec[t + 1] = (1.0 - spk) * pre
        al_rec[t] = al
        pre_rec[t] = pre
        spk_rec[t] = spk
        spk_sum += spk
    rates = spk_sum / T
    return v_rec, al_rec, pre_rec, spk_rec, rates


@jit_kernel
def adaptive_backward(s_seq, v_rec, al_rec, pre_rec, spk_rec, g_h_base,
                      w_in_t, theta, width, soft, unscaled, detach_reset):
    T, B, C = s_seq.shape
    H = pre_rec.shape[2]
    g_w_in_t = np.zeros((C, H))
    g_u_t = np.zeros((C, H))
    g_a = np.zeros(H)
    prof_v = np.empty(T)
    gv = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        s = s_seq[t]
        pre = pre_rec[t]
        spk = spk_rec[t]
        al = al_rec[t]
        v_prev = v_rec[t]
        cur = np.dot(s, w_in_t)
        gh = g_h_base.copy()
        if not detach_reset:
            gh = gh - pre * gv
        if soft:
            sg = spk * (1.0 - spk) / width
        else:
            sg = np.maximum(0.0, 1.0 - np.abs(pre - theta) / width) / width
        gp = (1.0 - spk) * gv + sg * gh
        if unscaled:
            g_al = gp * v_prev
            g_cur = gp
        else:
            g_al = gp * (v_prev - cur)
            g_cur = (1.0 - al) * gp
        gv = al * gp
        g_pre_ctrl = g_al * al * (1.0 - al)
        g_a += np.sum(g_pre_ctrl, axis=0)
        g_u_t += np.dot(np.ascontiguousarray(s.T), g_pre_ctrl)
        g_w_in_t += np.dot(np.ascontiguousarray(s.T), g_cur)
        prof_v[t] = np.sqrt(np.sum(gv * gv))
    return g_w_in_t, g_u_t, g_a, prof_v
