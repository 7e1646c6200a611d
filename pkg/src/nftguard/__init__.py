"""Symbolic-execution detector for five ERC-721 contract defect classes."""

__version__ = "0.1.0"

TOOL_VERSION = __version__

# Rule versions are stamped into every report. PB is v1.1 because it treats
# caller-keyed mapping reads as caller dependence (see defects.check_pb).
RULE_VERSIONS = {
    "RiskyMutableProxy": "v1",
    "ERC721Reentrancy": "v1",
    "UnlimitedMinting": "v1",
    "MissingRequirements": "v1",
    "PublicBurn": "v1.1",
}
