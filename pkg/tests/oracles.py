"""Independent reference implementations used as test oracles.

Written from the model definitions with plain ``math`` and explicit loops,
sharing no code with the package.
"""

import math


def loglik_direct(kind, p, weather_rows, y):
    """Day-by-day conditional log-likelihood.

    ``weather_rows`` is a list of (T, W, I); ``kind`` one of "es", "arx",
    "armax". Returns (total, pointwise list).
    """
    rho = p.rho1 if kind in ("arx", "armax") else 0.0
    nu = p.nu if kind == "armax" else (0.0, 0.0, 0.0)
    k = p.k_mix
    e = []
    out = []
    for t, (T, W, I) in enumerate(weather_rows):
        winter = (p.ua0 + p.ua_wind * W) * (p.t_base - T) - p.ga * I + p.phi_base
        summer = p.phi_base
        if t >= 1 and kind != "es":
            winter += rho * y[t - 1]
            summer += rho * y[t - 1]
        if kind == "armax":
            for i in (1, 2, 3):
                if t - i >= 0:
                    winter += nu[i - 1] * e[t - i]
                    summer += nu[i - 1] * e[t - i]
        ea, eb = math.exp(k * winter), math.exp(k * summer)
        mu = math.log(ea + eb) / k
        tau = ea / (ea + eb)
        sigma = tau * p.sigma_reduction + (1 - tau) * p.sigma_winter
        e.append(y[t] - mu)
        out.append(-0.5 * math.log(2 * math.pi * sigma * sigma) - (y[t] - mu) ** 2 / (2 * sigma * sigma))
    return math.fsum(out), out


def rows(weather):
    return list(zip(weather.t_ambient.tolist(), weather.wind_speed.tolist(),
                    weather.irradiance.tolist()))


def normal_posterior(prior_mean, prior_sd, y, sigma):
    """Conjugate Normal-mean posterior with known observation sd."""
    prec = 1.0 / prior_sd ** 2 + len(y) / sigma ** 2
    mean = (prior_mean / prior_sd ** 2 + sum(y) / sigma ** 2) / prec
    return mean, math.sqrt(1.0 / prec)
