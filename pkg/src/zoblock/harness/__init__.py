from .analysis import RateFit, check_as_tail, check_sample_complexity, fit_rate, rate_bound
from .config import ExperimentConfig
from .experiment import fit_rate_dir, read_summary, run_experiment
