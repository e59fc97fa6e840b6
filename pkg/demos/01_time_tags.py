"""
Time-tag streams
================

A stream is a sorted sequence of integer clock ticks with a channel per
tag.  Streams round-trip through the binary TTAG format and through CSV.
"""
# %%
import numpy as np

from cascadekit.timetags import (TimeTagStream, merge_streams, read_stream, write_csv,
                                 write_stream)

a = TimeTagStream([10, 250, 900], [0, 0, 0], resolution_ps=1, duration_ticks=1000,
                  channel_count=2)
b = TimeTagStream([5, 260, 700], [1, 1, 1], 1, 1000, 2)

# %%
# Merging interleaves by timestamp; selecting a channel undoes it.
both = merge_streams(a, b)
print("merged:", both.timestamps.tolist(), both.channels.tolist())
assert both.select(0) == a

# %%
# The binary format is a fixed header followed by packed records.
blob = write_stream(both)
print(f"{len(blob)} bytes on disk")
assert read_stream(blob) == both

# %%
# CSV is the human-readable alternative; ``read_stream`` sniffs either.
text = write_csv(both)
print(text)
np.testing.assert_array_equal(read_stream(text.encode()).timestamps, both.timestamps)
