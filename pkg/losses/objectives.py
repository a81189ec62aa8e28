"""
Minimax objectives of the encoder Theta and the adversary Phi
"""


def theta_objective(utility, recon, lam):
    """L_Theta = L_util - lambda * L_recon"""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return utility - lam * recon


def phi_objective(recon):
    """L_Phi = L_recon"""
    return recon
