"""Experiment configuration and the per-run metrics record."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

MODES = ("plain", "fhe", "gc")
PRESETS = ("paper", "test")


@dataclass
class ExperimentConfig:
    mode: str
    transport: str = "inproc"  # "inproc" or "tcp:<host>:<port>"
    preset: str = "paper"
    model_path: str | None = None  # None -> committed canonical model
    inputs_path: str | None = None  # None -> committed stress set
    repeat: int = 5
    reuse_keys: int = 0  # fhe: >0 sends keys once and that many ciphertexts per session
    layers: int | None = None  # sweep 1..layers (gc)
    inferences: int = 1  # inferences per session
    seed: int | None = None
    ot: str = "dh"
    hidden: int = 4  # width of synthetic sweep models
    fhe_input: str = "seeded"  # "seeded" (secret-key, seed-compressed) or "public"
    timeout: float = 1800.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.preset not in PRESETS:
            raise ValueError(f"preset must be one of {PRESETS}, got {self.preset!r}")
        if self.mode == "fhe" and self.preset != "paper":
            raise ValueError("fhe mode needs preset 'paper' (the 'test' chain has too few levels)")
        if self.repeat < 1:
            raise ValueError("repeat must be >= 1")
        if self.inferences < 1 or self.reuse_keys < 0:
            raise ValueError("inferences must be >= 1 and reuse_keys >= 0")
        if self.layers is not None and self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.fhe_input not in ("seeded", "public"):
            raise ValueError("fhe_input must be 'seeded' or 'public'")
        if self.ot not in ("dh", "dealer"):
            raise ValueError("ot must be 'dh' or 'dealer'")
        if self.transport != "inproc" and not self.transport.startswith("tcp:"):
            raise ValueError(f"transport must be 'inproc' or 'tcp:<host>:<port>', got {self.transport!r}")

    @property
    def tcp_address(self) -> str | None:
        return self.transport[4:] if self.transport.startswith("tcp:") else None

    @property
    def session_inferences(self) -> int:
        """Inferences carried by one session (keys reused across them in fhe mode)."""
        return max(self.inferences, self.reuse_keys) if self.mode == "fhe" else self.inferences

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricsRecord:
    mode: str
    transport: str
    preset: str
    input_index: int
    repetition: int
    x: list[float]
    y_output: float
    y_plain: float
    y_reference: float  # the oracle of this mode's arithmetic
    deviation_vs_plain: float
    deviation_is_absolute: bool
    rtt_seconds: float
    rtt_plain_seconds: float
    peak_memory_client_bytes: int
    peak_memory_server_bytes: int
    memory_attribution: str  # "per-process" or "combined"
    bytes_client_to_server: int
    bytes_server_to_client: int
    total_bytes: int
    flights: int
    round_trips: int
    n: int = 1  # inference index within its session (1-based)
    session_inferences: int = 1
    layers: int = 2
    setup_bytes: int | None = None  # S, fhe reuse sessions only
    marginal_bytes: float | None = None  # epsilon, fhe reuse sessions only
    keys_sent: bool = True

    @property
    def slowdown(self) -> float | None:
        return self.rtt_seconds / self.rtt_plain_seconds if self.rtt_plain_seconds > 0 else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slowdown"] = self.slowdown
        return d

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)] + ["slowdown"]


@dataclass
class ScalingReport:
    mode: str
    layers: list[int] = field(default_factory=list)
    layer_bytes_server_to_client: list[int] = field(default_factory=list)
    layer_byte_deltas: list[int] = field(default_factory=list)
    layer_fit_slope: float | None = None
    layer_fit_intercept: float | None = None
    layer_fit_r2: float | None = None
    inference_counts: list[int] = field(default_factory=list)
    inference_total_bytes: list[int] = field(default_factory=list)
    single_inference_bytes: int | None = None
    setup_bytes: int | None = None
    marginal_bytes: float | None = None
    crossover: list[dict] = field(default_factory=list)
    break_even_n: float | None = None  # n above which fresh garbling sends more than key reuse

    def to_dict(self) -> dict:
        return asdict(self)
