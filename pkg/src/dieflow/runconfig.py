"""Run configuration documents: JSON/YAML loading, schema validation, and
construction of the env/agent configs.

Unknown keys are rejected everywhere (additionalProperties: false); a
document that fails validation aborts before any compute.  The published
schemas are TRAIN_SCHEMA and BENCH_SCHEMA.
"""

import json
from pathlib import Path

import jsonschema
import yaml

from .agents import AgentConfig, default_agent_config
from .environment import EnvConfig

_ENV_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "case": {"enum": ["tjunction", "channel", "surrogate"]},
        "strategy": {"enum": ["incremental", "direct"]},
        "max_steps": {"type": "integer", "minimum": 1},
        "eps_goal": {"type": "number", "exclusiveMinimum": 0},
        "q_star": {"type": "number", "exclusiveMinimum": 0},
        "mu_star_range": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 2,
            "maxItems": 2,
        },
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "action_low": {"type": "number"},
        "action_high": {"type": "number"},
        "perturbation_scale": {"type": "number", "exclusiveMinimum": 0},
        "mesh_h": {"type": "number", "exclusiveMinimum": 0},
        "rho": {"type": "number", "exclusiveMinimum": 0},
        "sleep_ms": {"type": "number", "minimum": 0},
    },
}

_AGENT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "algorithm": {"enum": ["ppo", "a2c", "dqn"]},
        "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "gamma": {"type": "number", "minimum": 0, "maximum": 1},
        "gae_lambda": {"type": "number", "minimum": 0, "maximum": 1},
        "clip_range": {"type": ["number", "null"]},
        "n_steps": {"type": "integer", "minimum": 1},
        "epochs": {"type": "integer", "minimum": 1},
        "minibatch_size": {"type": "integer", "minimum": 1},
        "ent_coef": {"type": "number"},
        "vf_coef": {"type": "number"},
        "max_grad_norm": {"type": ["number", "null"]},
        "normalize_advantage": {"type": "boolean"},
        "log_std_init": {"type": "number"},
        "buffer_size": {"type": "integer", "minimum": 1},
        "batch_size": {"type": "integer", "minimum": 1},
        "target_update": {"type": "integer", "minimum": 1},
        "learning_starts": {"type": "integer", "minimum": 0},
        "train_freq": {"type": "integer", "minimum": 1},
        "eps_start": {"type": "number", "minimum": 0, "maximum": 1},
        "eps_end": {"type": "number", "minimum": 0, "maximum": 1},
        "eps_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "checkpoint_interval": {"type": ["integer", "null"]},
    },
}

TRAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["run_id", "total_steps"],
    "properties": {
        "run_id": {"type": "string", "minLength": 1},
        "seed": {"type": "integer", "minimum": 0},
        "n_envs": {"type": "integer", "minimum": 1},
        "total_steps": {"type": "integer", "minimum": 1},
        "out_dir": {"type": "string"},
        "step_log": {"type": "boolean"},
        "env": _ENV_SCHEMA,
        "agent": _AGENT_SCHEMA,
    },
}

BENCH_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["run_id", "budget_steps"],
    "properties": {
        "run_id": {"type": "string", "minLength": 1},
        "seed": {"type": "integer", "minimum": 0},
        "budget_steps": {"type": "integer", "minimum": 1},
        "n_envs_list": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 1,
        },
        "out_dir": {"type": "string"},
        "env": _ENV_SCHEMA,
    },
}


class ConfigError(ValueError):
    pass


def load_document(path) -> dict:
    """Read a JSON (.json) or YAML (.yaml/.yml) configuration document."""
    path = Path(path)
    if path.suffix not in (".json", ".yaml", ".yml"):
        raise ConfigError(f"unrecognized config extension {path.suffix!r}")
    text = path.read_text()
    if path.suffix == ".json":
        return json.loads(text)
    return yaml.safe_load(text)


def validate(doc: dict, schema: dict):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc.message}") from exc


def build_env_config(doc: dict) -> EnvConfig:
    env = dict(doc.get("env", {}))
    if "mu_star_range" in env:
        env["mu_star_range"] = tuple(env["mu_star_range"])
    return EnvConfig(**env, seed=doc.get("seed", 0))


def build_agent_config(doc: dict, strategy: str, total_steps: int) -> AgentConfig:
    agent = dict(doc.get("agent", {}))
    if "hidden" in agent:
        agent["hidden"] = tuple(agent["hidden"])
    algorithm = agent.pop("algorithm", "ppo")
    return default_agent_config(
        algorithm, strategy, total_steps, seed=doc.get("seed", 0), **agent
    )


def parse_train_config(doc: dict):
    """Validated (env_config, agent_config, n_envs, run_id, extras)."""
    validate(doc, TRAIN_SCHEMA)
    env_config = build_env_config(doc)
    agent_config = build_agent_config(doc, env_config.strategy, doc["total_steps"])
    return env_config, agent_config, doc.get("n_envs", 1), doc["run_id"]
