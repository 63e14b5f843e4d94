"""Parameter blocks of the four published parameter studies."""

import numpy as np

from .rates import ScenarioParams

FIG1 = ScenarioParams(p_out_ps_pd=0.2, p_out_ss_sd=0.2, p_out_ps_ss=0.1,
                      p_out_ss_pd=0.1, lambda_e=0.8)

FIG2 = ScenarioParams(p_out_ps_pd=0.4, p_out_ss_sd=0.2, p_out_ps_ss=0.1,
                      p_out_ss_pd=0.1)
# energy arrival rates are not listed for this study; an even spread is used
FIG2_LAMBDA_E = (0.2, 0.4, 0.6, 0.8, 1.0)

FIG3 = ScenarioParams(p_out_ps_pd=1.0, p_out_ss_sd=0.1, p_out_ps_ss=0.3,
                      p_out_ss_pd=0.2)
FIG3_LAMBDA_E = tuple(round(0.1 * k, 1) for k in range(1, 11))

# ss->pd SNR is taken equal to the other secondary links
FIG4_SNR = {"ps_ss": 8.0, "ss_sd": 8.0, "ss_pd": 8.0}
FIG4_GAMMA_PS_PD = (0.2, 2.0)
FIG4_SENSING_FRACTION = 0.1
FIG4_LAMBDA_E = 0.7
FIG4_LAMBDA_P = 0.1
FIG4_R_RANGE = (0.01, 6.0)


def fig4_r_grid(r_min=FIG4_R_RANGE[0], r_max=FIG4_R_RANGE[1], points=300):
    return np.linspace(r_min, r_max, points)


def fig4_snr(gamma_ps_pd: float) -> dict:
    return {"ps_pd": gamma_ps_pd, **FIG4_SNR}
