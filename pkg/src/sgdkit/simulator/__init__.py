"""Two-agent dialogue simulator with template realization."""

from .config import AutomatonConfig, ConfigError, TemplateSet, load_automaton, load_templates
from .generate import FlowSignature, GenerationResult, generate_corpus, simulate_one, write_simulation
from .outline import AutomatonDeadlock, generate_outline
from .realize import realize
from .scenario import Scenario, ScenarioError, sample_scenario

__all__ = [
    "AutomatonConfig",
    "AutomatonDeadlock",
    "ConfigError",
    "FlowSignature",
    "GenerationResult",
    "Scenario",
    "ScenarioError",
    "TemplateSet",
    "generate_corpus",
    "generate_outline",
    "load_automaton",
    "load_templates",
    "realize",
    "sample_scenario",
    "simulate_one",
    "write_simulation",
]
