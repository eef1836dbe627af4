"""Pure-Python twin of ``_kernels.pyx``.

Same arithmetic in the same order as the compiled kernels, so both backends
yield bit-identical results. Arrays are converted to lists once per chunk
because element access on numpy arrays is slower than on lists.
"""
from math import exp

CLAMP = 700.0


def _accept(beta, s, h, u):
    arg = 2.0 * beta * s * h
    if arg > CLAMP:
        arg = CLAMP
    elif arg < -CLAMP:
        arg = -CLAMP
    return u < 1.0 / (1.0 + exp(arg))


def burn(s, H, JT, beta, u, flips=None):
    n = len(s)
    n_att = len(u) // 2
    sl = s.tolist()
    Hl = H.tolist()
    Jl = JT.tolist()
    ul = u.tolist()
    fl = [0] * n_att if flips is not None else None
    n_flips = 0
    for a in range(n_att):
        k = int(ul[2 * a] * n)
        if _accept(beta, sl[k], Hl[k], ul[2 * a + 1]):
            sl[k] = -sl[k]
            two_s = 2.0 * sl[k]
            row = Jl[k]
            for i in range(n):
                Hl[i] += two_s * row[i]
            n_flips += 1
            if fl is not None:
                fl[a] = k
        elif fl is not None:
            fl[a] = -1
    s[:] = sl
    H[:] = Hl
    if flips is not None:
        flips[:n_att] = fl
    return n_flips


def measure(s, H, th, JT, TB, beta, u, t0, lag,
            m_sum, m_last, S0, last0, S1, last1,
            s_lag, ring, T_sum, T_mark, Theta, clock, flips=None):
    n = len(s)
    n_att = len(u) // 2
    sl, Hl, thl = s.tolist(), H.tolist(), th.tolist()
    Jl = JT.tolist()
    TBl = TB.tolist()
    ul = u.tolist()
    msum, mlast = m_sum.tolist(), m_last.tolist()
    S0l, L0 = S0.tolist(), last0.tolist()
    S1l, L1 = S1.tolist(), last1.tolist()
    slag, rl = s_lag.tolist(), ring.tolist()
    Ts, Tm, Th = T_sum.tolist(), T_mark.tolist(), Theta.tolist()
    clk = int(clock[0])
    fl = [0] * n_att if flips is not None else None
    n_flips = 0
    for a in range(n_att):
        t = t0 + a
        k = int(ul[2 * a] * n)
        flip = _accept(beta, sl[k], Hl[k], ul[2 * a + 1])
        old = rl[t % lag] if t >= lag + 1 else -1
        if flip:
            sk = sl[k]
            w = float(t - clk)
            if t > clk:
                for i in range(n):
                    Th[i] += w * thl[i]
                clk = t
            for i in range(n):
                Ts[i][k] += sk * (Th[i] - Tm[i][k])
                Tm[i][k] = Th[i]
            msum[k] += sk * (t - mlast[k])
            mlast[k] = t
            row0, rowl0 = S0l[k], L0[k]
            for j in range(n):
                row0[j] += sk * sl[j] * (t - rowl0[j])
                rowl0[j] = t
            for i in range(n):
                S0l[i][k] += sl[i] * sk * (t - L0[i][k])
                L0[i][k] = t
            row1, rowl1 = S1l[k], L1[k]
            for j in range(n):
                if t > rowl1[j]:
                    row1[j] += sk * slag[j] * (t - rowl1[j])
                    rowl1[j] = t
        if old >= 0:
            so = slag[old]
            for i in range(n):
                if t > L1[i][old]:
                    S1l[i][old] += sl[i] * so * (t - L1[i][old])
                    L1[i][old] = t
            slag[old] = -so
        if flip:
            sl[k] = -sl[k]
            two_s = 2.0 * sl[k]
            row = Jl[k]
            for i in range(n):
                Hl[i] += two_s * row[i]
            trow = TBl[k]
            sk = sl[k]
            for i in range(n):
                tb = sk * trow[i]
                thl[i] = (thl[i] + tb) / (1.0 + thl[i] * tb)
            n_flips += 1
        if t == 0:
            slag = list(sl)
        rl[t % lag] = k if flip else -1
        if fl is not None:
            fl[a] = k if flip else -1
    s[:] = sl
    H[:] = Hl
    th[:] = thl
    m_sum[:] = msum
    m_last[:] = mlast
    S0[:] = S0l
    last0[:] = L0
    S1[:] = S1l
    last1[:] = L1
    s_lag[:] = slag
    ring[:] = rl
    T_sum[:] = Ts
    T_mark[:] = Tm
    Theta[:] = Th
    clock[0] = clk
    if flips is not None:
        flips[:n_att] = fl
    return n_flips
