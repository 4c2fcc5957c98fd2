"""Inner loops of the simulator.

Both kernels take pre-drawn uniforms instead of a generator: two per step
for the ordered pair, ``m`` per step for a quantized message. That keeps the
compiled and interpreted paths bit-compatible and makes the draw count per
step fixed.
"""
import numpy as np

from ._backend import USE_NUMBA, kernel

STATUS_RUNNING = 0
STATUS_THRESHOLD = 1
STATUS_ABSORBED = 2

ABSORB_TOL = 1e-12


@kernel
def pair_from_uniforms(u_s, u_l, N):
    s = int(u_s * N)
    if s >= N:
        s = N - 1
    l = int(u_l * (N - 1))
    if l >= N - 1:
        l = N - 2
    if l >= s:
        l += 1
    return s, l


@kernel
def _draw_label(p, u):
    K = p.shape[0]
    c = 0.0
    for k in range(K):
        c += p[k]
        if u < c:
            return k
    for k in range(K - 1, -1, -1):
        if p[k] > 0.0:
            return k
    return K - 1


@kernel
def _modify_source(src, tmp, inv_T, h):
    """Bias tilt on label 0 (K=2 only), then tempering, in place."""
    K = src.shape[0]
    if h != 0.0:
        p = src[0]
        if 0.0 < p < 1.0:
            z = np.log(p) - np.log1p(-p) + h
            if z >= 0.0:
                p = 1.0 / (1.0 + np.exp(-z))
            else:
                e = np.exp(z)
                p = e / (1.0 + e)
        src[0] = p
        src[1] = 1.0 - p
    if inv_T != 1.0:
        total = 0.0
        for k in range(K):
            tmp[k] = src[k] ** inv_T if src[k] > 0.0 else 0.0
            total += tmp[k]
        if not (total > 0.0) or not np.isfinite(total):
            mx = -np.inf
            for k in range(K):
                if src[k] > 0.0:
                    tmp[k] = np.log(src[k]) * inv_T
                    if tmp[k] > mx:
                        mx = tmp[k]
            total = 0.0
            for k in range(K):
                tmp[k] = np.exp(tmp[k] - mx) if src[k] > 0.0 else 0.0
                total += tmp[k]
        for k in range(K):
            src[k] = tmp[k] / total


@kernel
def _absorbed(X, k):
    N, K = X.shape
    for i in range(N):
        for j in range(K):
            target = 1.0 if j == k else 0.0
            if abs(X[i, j] - target) > ABSORB_TOL:
                return False
    return True


@kernel
def _refresh(X, sums):
    """Exact column sums and the summed squared norms."""
    N, K = X.shape
    for k in range(K):
        sums[k] = 0.0
    sq = 0.0
    for i in range(N):
        for k in range(K):
            v = X[i, k]
            sums[k] += v
            sq += v * v
    return sq


@kernel
def simulate_chunk(X, sums, pair_u, msg_u, alpha, quantized, inv_T, h,
                   step0, probe_every, horizon, u_star, stop_threshold,
                   stop_absorb, probe_step, probe_mean, probe_q):
    """Advance the population ``X`` in place by up to ``len(pair_u)`` steps.

    Probes (mean vector and mean self-overlap) are written whenever the step
    count is a multiple of ``probe_every``, reaches ``horizon``, or the run
    stops. Returns ``(steps_done, probes_written, status)``.
    """
    N, K = X.shape
    n = pair_u.shape[0]
    m = msg_u.shape[1]
    src = np.empty(K)
    tmp = np.empty(K)
    y = np.empty(K)
    nprobe = 0
    status = STATUS_RUNNING
    absorb_gate = N * (1.0 - 1e-9)
    for t in range(n):
        s, l = pair_from_uniforms(pair_u[t, 0], pair_u[t, 1], N)
        for k in range(K):
            src[k] = X[s, k]
        if h != 0.0 or inv_T != 1.0:
            _modify_source(src, tmp, inv_T, h)
        if quantized:
            for k in range(K):
                y[k] = 0.0
            for j in range(m):
                y[_draw_label(src, msg_u[t, j])] += 1.0
            for k in range(K):
                y[k] = y[k] / m
        else:
            for k in range(K):
                y[k] = src[k]
        for k in range(K):
            old = X[l, k]
            if alpha == 1.0:
                new = y[k]
            else:
                new = (1.0 - alpha) * old + alpha * y[k]
            X[l, k] = new
            sums[k] += new - old

        step = step0 + t + 1
        if stop_absorb:
            kmax = 0
            for k in range(1, K):
                if sums[k] > sums[kmax]:
                    kmax = k
            if sums[kmax] >= absorb_gate and _absorbed(X, kmax):
                status = STATUS_ABSORBED
        if status != STATUS_RUNNING or step % probe_every == 0 or step == horizon:
            sq = _refresh(X, sums)
            U = 0.0
            for k in range(K):
                probe_mean[nprobe, k] = sums[k] / N
                U += probe_mean[nprobe, k] * probe_mean[nprobe, k]
            probe_q[nprobe] = sq / N
            probe_step[nprobe] = step
            nprobe += 1
            if stop_threshold and status == STATUS_RUNNING and U >= u_star:
                status = STATUS_THRESHOLD
        if status != STATUS_RUNNING:
            return t + 1, nprobe, status
    return n, nprobe, status


@kernel
def _drift_samples_loop(X, src, pair_u, msg_u, alpha, quantized, out):
    N, K = X.shape
    n = pair_u.shape[0]
    m = msg_u.shape[1]
    xbar = np.zeros(K)
    for i in range(N):
        for k in range(K):
            xbar[k] += X[i, k]
    for k in range(K):
        xbar[k] /= N
    y = np.empty(K)
    c_pair = 1.0 / (N * (N - 1.0))
    for t in range(n):
        s, l = pair_from_uniforms(pair_u[t, 0], pair_u[t, 1], N)
        # quantized message (or the source itself for Soft)
        if quantized:
            for k in range(K):
                y[k] = 0.0
            for j in range(m):
                y[_draw_label(src[s], msg_u[t, j])] += 1.0
            for k in range(K):
                y[k] = y[k] / m
        else:
            for k in range(K):
                y[k] = src[s, k]
        a_q = 0.0
        b_q = 0.0
        d_q = 0.0
        a_s = 0.0
        b_s = 0.0
        d_s = 0.0
        for k in range(K):
            dq = alpha * (y[k] - X[l, k])
            ds = alpha * (src[s, k] - X[l, k])
            dl = X[l, k] - xbar[k]
            a_q += xbar[k] * dq
            b_q += dq * dq
            d_q += dl * dq
            a_s += xbar[k] * ds
            b_s += ds * ds
            d_s += dl * ds
        dU = 2.0 * a_q / N + b_q / (N * N)
        dV = 2.0 * d_q + (N - 1.0) / N * b_q
        out[t, 0] = dU
        out[t, 1] = dV
        out[t, 2] = dU - dV * c_pair
        dU = 2.0 * a_s / N + b_s / (N * N)
        dV = 2.0 * d_s + (N - 1.0) / N * b_s
        out[t, 3] = dU
        out[t, 4] = dV
        out[t, 5] = dU - dV * c_pair


def drift_samples_numpy(X, src, pair_u, msg_u, alpha, quantized):
    """Vectorized counterpart of the compiled drift loop."""
    N, K = X.shape
    n = pair_u.shape[0]
    m = msg_u.shape[1]
    s = np.minimum((pair_u[:, 0] * N).astype(np.int64), N - 1)
    l = np.minimum((pair_u[:, 1] * (N - 1)).astype(np.int64), N - 2)
    l = l + (l >= s)
    xbar = X.sum(axis=0) / N
    xs = src[s]
    xl = X[l]
    if quantized:
        cdf = np.cumsum(src, axis=1)[s]
        last = K - 1 - np.argmax(src[:, ::-1] > 0, axis=1)
        counts = np.zeros((n, K))
        rows = np.arange(n)
        for j in range(m):
            lab = (msg_u[:, j, None] >= cdf).sum(axis=1)
            lab = np.minimum(lab, last[s])
            counts[rows, lab] += 1.0
        y = counts / m
    else:
        y = xs
    out = np.empty((n, 6))
    c_pair = 1.0 / (N * (N - 1.0))
    for col, target in ((0, y), (3, xs)):
        d = alpha * (target - xl)
        b = np.einsum("ij,ij->i", d, d)
        dU = 2.0 * (d @ xbar) / N + b / (N * N)
        dV = 2.0 * np.einsum("ij,ij->i", xl - xbar, d) + (N - 1.0) / N * b
        out[:, col] = dU
        out[:, col + 1] = dV
        out[:, col + 2] = dU - dV * c_pair
    return out


def drift_samples(X, src, pair_u, msg_u, alpha, quantized):
    """Per-sample one-step changes from the fixed state ``X``.

    Columns: dU, dV, dS for the channel's message, then dU, dV, dS for the
    Soft message (``src[s]``) on the same ordered pair.
    """
    if USE_NUMBA:
        out = np.empty((pair_u.shape[0], 6))
        _drift_samples_loop(X, src, pair_u, msg_u, float(alpha), bool(quantized), out)
        return out
    return drift_samples_numpy(X, src, pair_u, msg_u, alpha, quantized)
