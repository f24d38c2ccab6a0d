"""
Pattern bank tour
=================

Walk through the shipped regular-expression bank: where the patterns come
from, why word anchoring matters, and how group-extracting patterns keep
context words intact.
"""
from collections import Counter

from logveil.model import LogLine
from logveil.regexbank import builtin_bank, match_spans

bank = builtin_bank()
print(f"{len(bank)} patterns, by attribute:")
for kind, n in sorted(Counter(p.kind.name for p in bank).items()):
    print(f"  {kind:<9} {n}")

# Every pattern carries its provenance; nothing is anonymous.
print("\nIP patterns and their sources:")
for p in bank:
    if p.kind.name == "IP":
        print(f"  {p.id:<7} {p.provenance[:46]:<46} {p.pattern[:38]}")

# The anchored MAC pattern assumes the address is the whole line, so it finds
# nothing in real log text; adding word boundaries makes it usable.
mac_line = LogLine(
    "ARPT: 621131.293163: wl0: Roamed or switched channel, "
    "reason #8, bssid 5c:50:15:4c:18:13, last RSSI -64",
    "demo",
)
by_id = {p.id: p for p in bank}
print("\nanchored mac-01 finds:", match_spans(by_id["mac-01"], mac_line))
hits = match_spans(by_id["mac-fix"], mac_line)
print("boundary mac-fix finds:", [mac_line.raw[s.start : s.end] for s in hits])

# Group-extracting patterns report only the captured value, so the keyword
# that located the match ("user", "uid", "port") survives anonymization.
ssh = LogLine("Invalid user webmaster from 173.234.31.186", "demo")
spans = match_spans(by_id["username-03"], ssh)
print("\nusername-03 detects only:", [ssh.raw[s.start : s.end] for s in spans])
