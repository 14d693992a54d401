"""Independent reference computations used as test oracles.

Everything here uses only the standard library (builtin ``pow``,
``math.lcm``, ``math.isqrt``) so it shares no code with the package.
"""
import math


def paillier_encrypt(n: int, g: int, m: int, r: int) -> int:
    n2 = n * n
    return pow(g, m, n2) * pow(r, n, n2) % n2


def paillier_decrypt(p: int, q: int, g: int, c: int) -> int:
    n = p * q
    n2 = n * n
    lam = math.lcm(p - 1, q - 1)

    def L(x):
        return (x - 1) // n

    mu = pow(L(pow(g, lam, n2)), -1, n)
    return L(pow(c, lam, n2)) * mu % n


def isqrt_distance(a, b) -> int:
    return math.isqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2)


def blinded_differences(d_threshold: int, d_actual: int, i_max: int) -> list[int]:
    """The plaintext d_t - (d_a + i) for i = 1..i_max, before blinding."""
    return [d_threshold - (d_actual + i) for i in range(1, i_max + 1)]
