"""JSON decoding that remembers the source line of every object.

The stdlib decoder drops positions once parsing succeeds, which makes
schema errors hard to locate in hand-written config files.  Objects
decoded here are ``dict`` subclasses with a ``lineno`` attribute.
"""

from __future__ import annotations

import json
import json.decoder
import json.scanner


class PositionedDict(dict):
    lineno: int = 0


def _parse_object(s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo=None):
    s, end = s_and_end
    obj, new_end = json.decoder.JSONObject(
        s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo
    )
    out = PositionedDict(obj)
    # end points just past the opening brace
    out.lineno = s.count("\n", 0, end) + 1
    return out, new_end


class _Decoder(json.JSONDecoder):
    def __init__(self):
        super().__init__()
        self.parse_object = _parse_object
        # the C scanner ignores parse_object; force the pure-python one
        self.scan_once = json.scanner.py_make_scanner(self)


def loads(text: str):
    """Decode *text*; raises ``json.JSONDecodeError`` on syntax errors."""
    return _Decoder().decode(text)


def line_of(obj, default: int | None = None) -> int | None:
    return getattr(obj, "lineno", default)
