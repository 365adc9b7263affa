"""
Configuration settings for the DC microgrid control toolkit
"""
import os

from dotenv import load_dotenv


class Config:
    # ========================================
    # POWER FLOW
    # ========================================

    LF_TOL = 1e-9  # Newton residual tolerance (A)
    LF_STEP_TOL = 1e-10  # Newton step tolerance (V)
    LF_MAX_ITER = 50
    BANACH_TOL = 1e-10  # Contraction iteration step tolerance (V)
    BANACH_MAX_ITER = 10000
    ALPHA_GUARD = 1e9  # Upper limit of the feasibility witness search (V)

    # ========================================
    # QP / BRANCH AND BOUND
    # ========================================

    QP_FEAS_TOL = 1e-9
    QP_OPT_TOL = 1e-9
    BB_INTEGRALITY_TOL = 1e-6

    # ========================================
    # SECONDARY CONTROL
    # ========================================

    SECONDARY_EXACT_TOL = 1e-3  # Tracking declared exact below this cost (W)
    SQP_MAX_ITER = 100
    SQP_FEAS_TOL = 1e-10  # Per-unit constraint tolerance

    # Output settings
    OUTPUT_DIR = "output"
    DEFAULT_SCENARIO = "scenarios/dc16.json"
    LOG_LEVEL = "WARNING"  # Overridden by -v / -vv on the command line

    ENV_PREFIX = "DCMG_"

    @classmethod
    def from_env(cls, env_file: str = ".env"):
        """
        Copy of the settings with DCMG_<NAME> environment overrides applied

        A .env file is loaded first if present; values are cast to the type of
        the attribute they replace.
        """
        load_dotenv(env_file)
        settings = type("Config", (cls,), {})
        for name in dir(cls):
            if not name.isupper():
                continue
            raw = os.environ.get(cls.ENV_PREFIX + name)
            if raw is None:
                continue
            current = getattr(cls, name)
            if isinstance(current, bool):
                value = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw
            setattr(settings, name, value)
        return settings
