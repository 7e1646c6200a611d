"""Decoder for the compiler's compressed source-map encoding.

Wire format: one segment per instruction, `;`-separated; each segment is
`s:l:f:j:m` where trailing fields may be omitted and any empty field
inherits the previous segment's value. `s` is the byte offset into the
source, `l` the byte length, `f` the source file index (-1 for
compiler-generated code), `j` a jump annotation (i = into a function,
o = out of one, - = regular). The modifier-depth field `m` exists in
0.8.x output and is parsed but not kept.
"""

from dataclasses import dataclass

from ..errors import MalformedSourceMap

_JUMP_KINDS = {"i": "into-function", "o": "out-of-function", "-": "regular"}


@dataclass(frozen=True)
class SourceMapEntry:
    offset: int
    length: int
    file_index: int
    jump_kind: str = "regular"

    @property
    def compiler_generated(self):
        return self.file_index < 0


GENERATED_ENTRY = SourceMapEntry(0, 0, -1, "regular")


def decode_source_map(raw: str, instruction_count: int):
    """Expand `raw` into exactly instruction_count entries.

    Raises MalformedSourceMap on a field that does not parse or when the
    segment count disagrees with instruction_count.
    """
    if raw == "":
        if instruction_count != 0:
            raise MalformedSourceMap(
                f"empty source map but {instruction_count} instructions expected")
        return []

    segments = raw.split(";")
    if len(segments) != instruction_count:
        raise MalformedSourceMap(
            f"{len(segments)} segments, {instruction_count} instructions expected")

    entries = []
    offset = length = 0
    file_index = 0
    jump = "regular"
    for pos, seg in enumerate(segments):
        fields = seg.split(":")
        try:
            if len(fields) > 0 and fields[0] != "":
                offset = int(fields[0])
            if len(fields) > 1 and fields[1] != "":
                length = int(fields[1])
            if len(fields) > 2 and fields[2] != "":
                file_index = int(fields[2])
            if len(fields) > 3 and fields[3] != "":
                if fields[3] not in _JUMP_KINDS:
                    raise ValueError(fields[3])
                jump = _JUMP_KINDS[fields[3]]
        except ValueError as exc:
            raise MalformedSourceMap(f"segment {pos}: bad field in {seg!r}") from exc
        entries.append(SourceMapEntry(offset, length, file_index, jump))
    return entries


def segment_count(raw: str) -> int:
    return 0 if raw == "" else raw.count(";") + 1
