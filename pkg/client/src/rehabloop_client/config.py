"""Client configuration and the landmark-model index mapping table."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

# The engine's canonical 17-point landmark vocabulary. This list is part
# of the wire contract, mirrored here so the client stays independent of
# the engine package.
CANONICAL_LANDMARKS = (
    "nose",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "left_hip", "right_hip",
    "left_knee", "right_knee",
    "left_ankle", "right_ankle",
    "left_heel", "right_heel",
    "left_foot_index", "right_foot_index",
)


class ConfigError(ValueError):
    pass


def load_mapping(path: Optional[str] = None) -> dict:
    """Model landmark index -> canonical name. Must cover all 17 names."""
    if path is None:
        doc = json.loads(
            resources.files("rehabloop_client")
            .joinpath("data/mediapipe_mapping.json").read_text(encoding="utf-8"))
    else:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    if doc.get("version") != 1:
        raise ConfigError(f"unsupported mapping version: {doc.get('version')!r}")
    raw = doc.get("mapping")
    if not isinstance(raw, dict):
        raise ConfigError("mapping table missing")
    mapping = {}
    for key, name in raw.items():
        try:
            index = int(key)
        except (TypeError, ValueError):
            raise ConfigError(f"mapping key {key!r} is not an integer index")
        if name not in CANONICAL_LANDMARKS:
            raise ConfigError(f"mapping target {name!r} is not a canonical landmark")
        mapping[index] = name
    missing = set(CANONICAL_LANDMARKS) - set(mapping.values())
    if missing:
        raise ConfigError(
            f"mapping must cover all 17 canonical landmarks; missing: "
            f"{', '.join(sorted(missing))}")
    return mapping


@dataclass
class ClientConfig:
    endpoint: str = "127.0.0.1:7700"
    camera_index: int = 0
    target_fps: float = 15.0
    mapping_path: Optional[str] = None
    skeleton_overlay: bool = True
    banner_position: str = "top"  # top | bottom
    tts: bool = False
    note_text: Optional[str] = None
    note_path: Optional[str] = None
    mapping: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.target_fps < 1.0:
            raise ConfigError("target_fps must be >= 1")
        if self.banner_position not in ("top", "bottom"):
            raise ConfigError("banner_position must be 'top' or 'bottom'")
        if not self.mapping:
            self.mapping = load_mapping(self.mapping_path)

    @property
    def host_port(self) -> tuple:
        host, _, port = self.endpoint.rpartition(":")
        return (host or "127.0.0.1", int(port))

    def note(self) -> str:
        if self.note_path:
            with open(self.note_path, encoding="utf-8") as fh:
                return fh.read()
        if self.note_text:
            return self.note_text
        raise ConfigError("a prescription note is required to open a session")
