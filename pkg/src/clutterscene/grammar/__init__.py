from .defaults import default_rule_set, render_rules, shipped_rules_text
from .dsl import RuleParseError, parse_rule_set, parse_rules
from .engine import Match, RewriteError, apply_rule, feasible_mask, find_matches, first_match, iter_matches
from .rules import KindPattern, LabelPattern, Rule, RuleError, RuleSet

__all__ = [
    "KindPattern", "LabelPattern", "Match", "RewriteError", "Rule", "RuleError", "RuleParseError", "RuleSet",
    "apply_rule", "default_rule_set", "feasible_mask", "find_matches", "first_match", "iter_matches",
    "parse_rule_set", "parse_rules", "render_rules", "shipped_rules_text",
]
