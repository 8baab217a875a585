"""Error rates of pairwise LLM judgments, estimated without ground truth.

The pipeline: collect ordered pairwise judgments (harness), assemble them
into preference matrices (prefcore), score with Copeland row sums and the
deviation metric delta_s (copeland), and estimate the judge's error rates
by matching deviation curves against synthetic matrices (estimator) or by
closed-form probabilities (probmodel, synth). A strength model with an
order bias (btmodel) cross-checks the estimates from a different angle.
"""

from .btmodel import (
    BTFit,
    BTRanking,
    BTSearchResult,
    bt_eps_search,
    bt_iterate,
    bt_rank_with_eps,
    bt_sweep,
    score_spread,
    stationarity_residual,
)
from .copeland import (
    CopelandScores,
    DeltaCurve,
    copeland_scores,
    delta_curve,
    delta_s,
    perfect_sequence,
    read_curves_csv,
    spearman_rho,
    write_curves_csv,
)
from .errors import PairerrError
from .estimator import (
    ErrorEstimate,
    FitConfig,
    SubCellEstimate,
    clear_synthetic_cache,
    empirical_curve,
    estimate_positional,
    estimate_uniform,
    misfit,
    synthetic_curve,
    write_surface_csv,
)
from .harness import (
    MockJudge,
    PromptTemplate,
    ProviderConfig,
    RecordLog,
    RunPlan,
    RunSummary,
    generate_pseudo_corpus,
    load_plan,
    render_prompt,
    run_comparisons,
)
from .prefcore import (
    ConsensusMatrixZ,
    PreferenceMatrixY,
    PreferenceRecord,
    RepeatedMatrixW,
    StrengthMatrixX,
    build_w,
    build_x,
    build_y,
    build_z,
    commutativity_score,
    read_records,
    subselect_trials,
    write_records,
)
from .probmodel import (
    ErrorSpec,
    RepeatSpec,
    p_correct_copeland,
    scalability_table,
    w_value_probs,
    write_scalability_csv,
    z_value_probs,
)
from .synth import MCEstimate, mc_p_correct, synth_w, synth_z

__version__ = "0.1.0"

__all__ = [
    "BTFit",
    "BTRanking",
    "BTSearchResult",
    "ConsensusMatrixZ",
    "CopelandScores",
    "DeltaCurve",
    "ErrorEstimate",
    "ErrorSpec",
    "FitConfig",
    "MCEstimate",
    "MockJudge",
    "PairerrError",
    "PreferenceMatrixY",
    "PreferenceRecord",
    "PromptTemplate",
    "ProviderConfig",
    "RecordLog",
    "RepeatSpec",
    "RepeatedMatrixW",
    "RunPlan",
    "RunSummary",
    "StrengthMatrixX",
    "SubCellEstimate",
    "bt_eps_search",
    "bt_iterate",
    "bt_rank_with_eps",
    "bt_sweep",
    "build_w",
    "build_x",
    "build_y",
    "build_z",
    "clear_synthetic_cache",
    "commutativity_score",
    "copeland_scores",
    "delta_curve",
    "delta_s",
    "empirical_curve",
    "estimate_positional",
    "estimate_uniform",
    "generate_pseudo_corpus",
    "load_plan",
    "mc_p_correct",
    "misfit",
    "p_correct_copeland",
    "perfect_sequence",
    "read_curves_csv",
    "read_records",
    "render_prompt",
    "run_comparisons",
    "scalability_table",
    "score_spread",
    "spearman_rho",
    "stationarity_residual",
    "subselect_trials",
    "synth_w",
    "synth_z",
    "synthetic_curve",
    "w_value_probs",
    "write_curves_csv",
    "write_records",
    "write_scalability_csv",
    "write_surface_csv",
    "z_value_probs",
]
