"""Independent high-precision evaluation of the closed-form reference values frozen in the tests."""
from mpmath import log, mp, mpf, sqrt

mp.dps = 40


def radius(n, delta):
    return sqrt(log(2 / delta) / (2 * n))


def audit_gap_threshold(n, n_sub, delta, alpha):
    return alpha / (mpf(n_sub) / n - radius(n, delta)) + 2 * radius(n_sub, delta)


def certified_level(alpha, delta, n):
    r = radius(n, delta)
    return alpha + 4 * r + (alpha - 2 * r) ** -2 * 2 * r


def interval_width(alpha, beta, eps, m, gamma, delta, k, mk):
    return alpha / gamma + eps + 1 / m + ((mk + eps + 1 / m + beta / gamma) / delta) ** (mpf(1) / k)


def sample_plan(a_t, b_t, d_t, eps, groups, k, m):
    c = 6 + 2 / eps ** 2
    sa, sb = ((a_t - eps) / c) ** 2, ((b_t - eps) / c) ** 2
    q_bar = 6 * groups * k * m ** 2 / (sa * sb)
    delta = d_t / max(3 * groups * (k * m ** 2 + m), q_bar)
    log_q = log(2 * q_bar / delta)
    n_a, n_b = log_q / (2 * sa), log_q / (2 * sb)
    alpha, beta = 2 * sqrt(log_q / (2 * n_a)) + eps, 2 * sqrt(log_q / (2 * n_b)) + eps
    log_d = log(2 / delta)
    n = max(log_q / log_d * n_a, log_q / log_d * n_b, 2 * log_d / alpha ** 2, 2 * log_d / beta ** 2)
    return {"q_bar": q_bar, "delta": delta, "alpha": alpha, "beta": beta, "n": n}


if __name__ == "__main__":
    print("audit |gap| threshold (n=800, n'=200)", audit_gap_threshold(800, 200, mpf("0.05"), mpf("0.05")))
    print("alpha' (0.1, 0.05, 1e7)            ", certified_level(mpf("0.1"), mpf("0.05"), 10 ** 7))
    print("interval width                     ", interval_width(*[mpf(v) for v in
          ("0.005", "0.005", "0.001", "1000", "0.25", "0.1")], 2, mpf("0.01")))
    base = sample_plan(mpf("0.2"), mpf("0.2"), mpf("0.05"), mpf("0.05"), 8, 4, 10)
    for key, v in base.items():
        print(f"plan {key:6s}", mp.nstr(v, 17))
    double = sample_plan(mpf("0.2"), mpf("0.2"), mpf("0.05"), mpf("0.05"), 16, 4, 10)
    print("n(2|G|) / n(|G|)", mp.nstr(double["n"] / base["n"], 17))
