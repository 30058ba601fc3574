"""Independent numerical oracles used only by the tests."""
import numpy as np


def poisson_bracket_fd(f, g, x, xi, h=1e-5):
    """``{f, g} = f_xi . g_x - f_x . g_xi`` by central differences.

    ``f`` and ``g`` map ``(x, xi)`` to (possibly complex) scalars.
    """
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    n = x.size

    def grad(fun, which):
        out = np.zeros(n, complex)
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            if which == "x":
                out[k] = (fun(x + e, xi) - fun(x - e, xi)) / (2 * h)
            else:
                out[k] = (fun(x, xi + e) - fun(x, xi - e)) / (2 * h)
        return out

    return grad(f, "xi") @ grad(g, "x") - grad(f, "x") @ grad(g, "xi")


def conjugated_symbol(p, psi, tau):
    """``(x, xi) -> p2(x, xi + i tau dpsi(x))`` and its complex conjugate."""
    def pz(x, xi):
        d = psi.jet(x).grad
        z = xi + 1j * tau * d
        return z @ p.coefficients(x) @ z

    def pz_bar(x, xi):
        return np.conj(pz(x, xi))

    return pz, pz_bar


def c_oracle(p, psi, x, xi, tau, h=1e-5):
    pz, pzb = conjugated_symbol(p, psi, tau)
    return (poisson_bracket_fd(pzb, pz, x, xi, h) / (1j * tau)).real


def b2_oracle(p, psi, x, xi, h=1e-5):
    def p2(x, xi):
        return xi @ p.coefficients(x) @ xi

    def b1(x, xi):
        return poisson_bracket_fd(p2, lambda y, e: psi.value(y), x, xi, h)

    return poisson_bracket_fd(p2, b1, x, xi, 1e-4).real
