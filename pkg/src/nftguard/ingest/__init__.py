from .compiler import compile_source, CompilationUnit, FunctionContext, find_solc
from .srcmap import SourceMapEntry, decode_source_map
from .slotmap import SlotMap, SlotInfo, KeywordIndex, derive_slot_map, index_keywords

__all__ = [
    "compile_source", "CompilationUnit", "FunctionContext", "find_solc",
    "SourceMapEntry", "decode_source_map",
    "SlotMap", "SlotInfo", "KeywordIndex", "derive_slot_map", "index_keywords",
]
