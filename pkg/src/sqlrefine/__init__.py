"""Interactive SQL refinement through editable step-by-step explanations.

Pipeline: parse SQL to an AST, decompose it into execution-ordered clauses,
translate each clause to an editable natural-language step, convert user edits
back into clause-level SQL changes (directly for atomic edits, by regeneration
otherwise), and recompose a valid query.
"""

from .ast_nodes import Compound, Query, SelectCore
from .schema import SchemaCatalog, load_schema, readable_name
from .parser import parse_sql
from .render import render_sql
from .decompose import ClauseKind, decompose, execution_order
from .explain import Explanation, ExplanationStep, explain_clause, explain_query, paraphrase
from .editing import EditClassification, EditRequest, align, chunk, classify_edit, direct_transform
from .clausegen import GenerationContext, RuleBasedGenerator, generate_clause, infer_clause_type
from .compose import compose
from .evaluate import component_match, exact_set_match
from .pipeline import apply_step_edit, delete_step, insert_step
from .simulate import run_refinement_loop, simulate_feedback

__all__ = [
    "Compound",
    "Query",
    "SelectCore",
    "SchemaCatalog",
    "load_schema",
    "readable_name",
    "parse_sql",
    "render_sql",
    "ClauseKind",
    "decompose",
    "execution_order",
    "Explanation",
    "ExplanationStep",
    "explain_clause",
    "explain_query",
    "paraphrase",
    "EditClassification",
    "EditRequest",
    "align",
    "chunk",
    "classify_edit",
    "direct_transform",
    "GenerationContext",
    "RuleBasedGenerator",
    "generate_clause",
    "infer_clause_type",
    "compose",
    "component_match",
    "exact_set_match",
    "apply_step_edit",
    "insert_step",
    "delete_step",
    "run_refinement_loop",
    "simulate_feedback",
]
