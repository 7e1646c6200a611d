"""Analysis configuration and keyword lists."""

import os
from dataclasses import dataclass, field


# Keyword lists behind the slot-name matcher. The matcher itself is a
# case-insensitive substring test on the variable name, so "maxSupply",
# "MAX_SUPPLY" and "totalSupply" all land in the supply set.
DEFAULT_KEYWORDS = {
    "proxy": ["proxy"],
    "owner": ["owner", "_owners", "ownership"],
    "supply": ["supply", "max", "limit", "total"],
}

# Function-name anchors for mint/burn contexts. Name alone never decides a
# context; the behavioral signal (ownership store / delete) must be present too.
DEFAULT_CONTEXT_KEYWORDS = {
    "mint": ["mint", "reserve", "airdrop"],
    "burn": ["burn"],
}

ERC721_SELECTORS = {
    "approve(address,uint256)": 0x095EA7B3,
    "setApprovalForAll(address,bool)": 0xA22CB465,
    "transferFrom(address,address,uint256)": 0x23B872DD,
    "safeTransferFrom(address,address,uint256)": 0x42842E0E,
    "safeTransferFrom(address,address,uint256,bytes)": 0xB88D4FDE,
}

# First 4 bytes of keccak-256("onERC721Received(address,address,uint256,bytes)").
ON_ERC721_RECEIVED_SELECTOR = 0x150B7A02

DEFECT_KINDS = (
    "RiskyMutableProxy",
    "ERC721Reentrancy",
    "UnlimitedMinting",
    "MissingRequirements",
    "PublicBurn",
)

KIND_ALIASES = {
    "rmp": "RiskyMutableProxy",
    "er": "ERC721Reentrancy",
    "um": "UnlimitedMinting",
    "mr": "MissingRequirements",
    "pb": "PublicBurn",
}


@dataclass
class AnalysisConfig:
    solc_path: str | None = None
    smt_path: str | None = None
    compiler_version: str = "0.8.16"
    timeout_s: float = 600.0
    loop_bound: int = 10
    depth_limit: int = 200
    solver_timeout_s: float = 10.0
    max_steps_per_path: int = 2_000_000
    keywords: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_KEYWORDS.items()})
    context_keywords: dict = field(
        default_factory=lambda: {k: list(v) for k, v in DEFAULT_CONTEXT_KEYWORDS.items()}
    )
    only_kinds: tuple = DEFECT_KINDS
    worker_count: int = 1
    json_out: str | None = None
    trace_level: int = 0  # 0 = storage/call events only, 1 = stack/memory events too

    def __post_init__(self):
        if self.timeout_s <= 0 or self.loop_bound <= 0 or self.depth_limit <= 0:
            raise ValueError("bounds must be positive")
        if self.solver_timeout_s <= 0 or self.worker_count < 1:
            raise ValueError("bounds must be positive")

    def resolved_solc(self):
        return self.solc_path or os.environ.get("NFTG_SOLC")

    def resolved_smt(self):
        return self.smt_path or os.environ.get("NFTG_SMT")


def parse_kind_filter(text):
    """Parse the --only argument: comma list of kind names or short codes."""
    kinds = []
    for piece in text.split(","):
        piece = piece.strip()
        if not piece:
            continue
        canon = KIND_ALIASES.get(piece.lower())
        if canon is None:
            for k in DEFECT_KINDS:
                if k.lower() == piece.lower():
                    canon = k
                    break
        if canon is None:
            raise ValueError(f"unknown defect kind: {piece!r}")
        if canon not in kinds:
            kinds.append(canon)
    return tuple(kinds)
