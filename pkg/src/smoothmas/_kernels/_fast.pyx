# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Fused smoothed-decision kernel for scripted policies.

Mirrors, operation for operation, the pure path: core.Stream draws,
policy.evaluate_policy / policy.hallucinate_wrap arithmetic, and the
smoothing.smoothed_decision_detail loop. Outputs are bit-identical to the
Python implementation; the parity tests enforce that. Any change here must be
made in the Python reference as well.
"""

from libc.math cimport ceil, cos, log, sqrt
from libc.stdlib cimport free, malloc, qsort

ctypedef unsigned long long u64

cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = 6.283185307179586
cdef u64 GAMMA = 0x9E3779B97F4A7C15ULL


cdef inline u64 c_mix64(u64 z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline u64 c_fold(u64 h, u64 w) nogil:
    return c_mix64((h * GAMMA) ^ c_mix64(w))


cdef inline u64 c_word_at(u64 key, u64 i) nogil:
    return c_mix64(key + (i + 1) * GAMMA)


cdef inline double c_uniform_at(u64 key, u64 i) nogil:
    return <double>(c_word_at(key, i) >> 11) * INV_2_53


cdef struct CStream:
    u64 key
    u64 cursor


cdef inline double stream_uniform(CStream* s) nogil:
    cdef double u = c_uniform_at(s.key, s.cursor)
    s.cursor += 1
    return u


cdef inline double stream_gaussian(CStream* s) nogil:
    cdef double u1 = c_uniform_at(s.key, s.cursor)
    cdef double u2 = c_uniform_at(s.key, s.cursor + 1)
    s.cursor += 2
    cdef double r = sqrt(-2.0 * log(1.0 - u1))
    return r * cos(TWO_PI * u2)


cdef inline double clamp1(double x, double lo, double hi) nogil:
    if x < lo:
        return lo
    elif x > hi:
        return hi
    return x


cdef int cmp_double(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const double*>a)[0]
    cdef double y = (<const double*>b)[0]
    if x < y:
        return -1
    elif x > y:
        return 1
    return 0


# Python-visible twins of the stream primitives, for parity tests.

def mix64(z):
    return c_mix64(<u64>z)


def fold(h, w):
    return c_fold(<u64>h, <u64>w)


def word_at(key, i):
    return c_word_at(<u64>key, <u64>i)


def uniform_at(key, i):
    return c_uniform_at(<u64>key, <u64>i)


cdef void eval_sample(
    CStream* stream,
    double* own, double* nbrs, int k, int d,
    double w, int mimic, double jitter_sd,
    double p_h, int mode, double magnitude, double* target,
    double* lo, double* hi, double sigma,
    double* out, double* scratch,
) nogil:
    """One perturbed, hallucination-wrapped policy query.

    scratch must hold (k + 2) * d doubles: perturbed own, perturbed
    neighbors, and the base output.
    """
    cdef double* p_own = scratch
    cdef double* p_nbrs = scratch + d
    cdef double* base = scratch + (k + 1) * d
    cdef int c, j
    cdef double acc, u, sign
    cdef bint halluc

    for c in range(d):
        p_own[c] = clamp1(own[c] + sigma * stream_gaussian(stream), lo[c], hi[c])
    for j in range(k):
        for c in range(d):
            p_nbrs[j * d + c] = clamp1(
                nbrs[j * d + c] + sigma * stream_gaussian(stream), lo[c], hi[c]
            )

    halluc = False
    if p_h > 0.0:
        u = stream_uniform(stream)
        if u < p_h:
            halluc = True

    if halluc and mode == 1:  # uniform-random over the domain
        for c in range(d):
            out[c] = lo[c] + (hi[c] - lo[c]) * stream_uniform(stream)
        return
    if halluc and mode == 2:  # fixed-target
        for c in range(d):
            out[c] = clamp1(target[c], lo[c], hi[c])
        return

    # base policy evaluation (needed both for the honest branch and large-jump)
    if k == 0:
        for c in range(d):
            base[c] = p_own[c]
    else:
        for c in range(d):
            acc = 0.0
            for j in range(k):
                acc += p_nbrs[j * d + c]
            base[c] = w * p_own[c] + (1.0 - w) * (acc / k)
        if mimic:
            for c in range(d):
                base[c] = base[c] + jitter_sd * stream_gaussian(stream)
        for c in range(d):
            base[c] = clamp1(base[c], lo[c], hi[c])

    if not halluc:
        for c in range(d):
            out[c] = base[c]
        return

    # large-jump: displace the base output by +-magnitude per component
    for c in range(d):
        sign = 1.0 if stream_uniform(stream) < 0.5 else -1.0
        out[c] = clamp1(base[c] + sign * magnitude, lo[c], hi[c])


def scripted_decision(
    own_list, nbrs_flat, int k, int d,
    double w, int mimic, double jitter_sd,
    double p_h, int mode, double magnitude, target_list,
    lo_list, hi_list,
    double sigma, int m1, double cc, double tau, int m_max, double trim_frac,
    prefix,
):
    """Two-stage smoothed decision over the scripted policy.

    Returns (value list, probe variance, extra sample count).
    """
    cdef u64 pfx = <u64>prefix
    cdef int m_cap = m1 + m_max
    cdef int c, j, s, m2, m, g, kept
    cdef double acc, v, q
    cdef CStream stream

    cdef double* own = <double*>malloc(d * sizeof(double))
    cdef double* nbrs = <double*>malloc((k * d if k > 0 else 1) * sizeof(double))
    cdef double* target = <double*>malloc(d * sizeof(double))
    cdef double* lo = <double*>malloc(d * sizeof(double))
    cdef double* hi = <double*>malloc(d * sizeof(double))
    cdef double* samples = <double*>malloc(m_cap * d * sizeof(double))
    cdef double* scratch = <double*>malloc((k + 2) * d * sizeof(double))
    cdef double* means = <double*>malloc(d * sizeof(double))
    cdef double* column = <double*>malloc(m_cap * sizeof(double))
    cdef double* out = <double*>malloc(d * sizeof(double))
    if (own == NULL or nbrs == NULL or target == NULL or lo == NULL or hi == NULL
            or samples == NULL or scratch == NULL or means == NULL
            or column == NULL or out == NULL):
        free(own); free(nbrs); free(target); free(lo); free(hi)
        free(samples); free(scratch); free(means); free(column); free(out)
        raise MemoryError()

    try:
        for c in range(d):
            own[c] = own_list[c]
            target[c] = target_list[c]
            lo[c] = lo_list[c]
            hi[c] = hi_list[c]
        for j in range(k * d):
            nbrs[j] = nbrs_flat[j]

        with nogil:
            # stage 1: probe
            for s in range(m1):
                stream.key = c_fold(pfx, <u64>s)
                stream.cursor = 0
                eval_sample(&stream, own, nbrs, k, d, w, mimic, jitter_sd,
                            p_h, mode, magnitude, target, lo, hi, sigma,
                            samples + s * d, scratch)

            # probe variance, biased 1/m1 normalization
            for c in range(d):
                acc = 0.0
                for s in range(m1):
                    acc += samples[s * d + c]
                means[c] = acc / m1
            acc = 0.0
            for s in range(m1):
                for c in range(d):
                    v = samples[s * d + c] - means[c]
                    acc += v * v
            v = acc / m1

            # stage 2 budget
            if v == 0.0:
                m2 = 0
            else:
                q = (cc * v) / tau
                m2 = <int>ceil(q)
                if m2 > m_max:
                    m2 = m_max

            for s in range(m1, m1 + m2):
                stream.key = c_fold(pfx, <u64>s)
                stream.cursor = 0
                eval_sample(&stream, own, nbrs, k, d, w, mimic, jitter_sd,
                            p_h, mode, magnitude, target, lo, hi, sigma,
                            samples + s * d, scratch)

            # component-wise trimmed mean
            m = m1 + m2
            g = <int>(trim_frac * m)
            kept = m - 2 * g
            for c in range(d):
                for s in range(m):
                    column[s] = samples[s * d + c]
                qsort(column, m, sizeof(double), cmp_double)
                acc = 0.0
                for s in range(g, m - g):
                    acc += column[s]
                out[c] = acc / kept

        value = [out[c] for c in range(d)]
        return value, v, m2
    finally:
        free(own); free(nbrs); free(target); free(lo); free(hi)
        free(samples); free(scratch); free(means); free(column); free(out)
