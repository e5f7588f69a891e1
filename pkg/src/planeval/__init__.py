"""planeval: an offline-reproducible harness for locating the multi-step
reasoning bottleneck of language models (arranging vs executing), running
plan-guided two-round inference, scoring math and tool-call outputs, and
emitting plan-centric SFT training corpora."""

__version__ = "0.1.0"

from .arith import (
    PROBE_PROMPT,
    eval_expr,
    grade_number,
    measure_p_exe,
    normalize_expression,
    parse_model_number,
)
from .corpora import (
    ArithmeticProbe,
    MathProblem,
    StepDistribution,
    ToolCall,
    ToolTask,
    extract_probes,
    load_gsm8k,
    load_toolbench,
    step_distribution,
)
from .gateway import (
    ChatExchange,
    ChatRequest,
    Gateway,
    Message,
    MockTransport,
    ModelSpec,
    RetryPolicy,
    cache_key,
    user_message,
    write_transcript,
)
from .planflow import (
    Plan,
    PromptTemplate,
    generate_plan,
    lint_plan,
    load_template,
    parse_tool_response,
    render_call_sequence,
    run_condition_matrix,
    solve_direct,
    solve_with_plan,
    template_hashes,
)
from .scoring import (
    Condition,
    EvalRecord,
    FitResult,
    ToolScore,
    api_selection_f1,
    bucket_by_steps,
    check_math_answer,
    exe_acc,
    fit_power_and_linear,
    mcnemar_exact,
    paired_bootstrap_p,
    paired_significance,
    reason_score,
    rouge_l,
    tool_sequence_score,
)
from .sftgen import SftRecord, build_sft_corpus, load_sft, serialize_sft
from .runner import RunConfig, cli_dispatch, emit_report, main, summarize

__all__ = [
    "PROBE_PROMPT",
    "eval_expr",
    "grade_number",
    "measure_p_exe",
    "normalize_expression",
    "parse_model_number",
    "ArithmeticProbe",
    "MathProblem",
    "StepDistribution",
    "ToolCall",
    "ToolTask",
    "extract_probes",
    "load_gsm8k",
    "load_toolbench",
    "step_distribution",
    "ChatExchange",
    "ChatRequest",
    "Gateway",
    "Message",
    "MockTransport",
    "ModelSpec",
    "RetryPolicy",
    "cache_key",
    "user_message",
    "write_transcript",
    "Plan",
    "PromptTemplate",
    "generate_plan",
    "lint_plan",
    "load_template",
    "parse_tool_response",
    "render_call_sequence",
    "run_condition_matrix",
    "solve_direct",
    "solve_with_plan",
    "template_hashes",
    "Condition",
    "EvalRecord",
    "FitResult",
    "ToolScore",
    "api_selection_f1",
    "bucket_by_steps",
    "check_math_answer",
    "exe_acc",
    "fit_power_and_linear",
    "mcnemar_exact",
    "paired_bootstrap_p",
    "paired_significance",
    "reason_score",
    "rouge_l",
    "tool_sequence_score",
    "SftRecord",
    "build_sft_corpus",
    "load_sft",
    "serialize_sft",
    "RunConfig",
    "cli_dispatch",
    "emit_report",
    "main",
    "summarize",
]
