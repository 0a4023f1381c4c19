"""Scheduling core for multi-camera video analytics under a shared uplink.

The package has four layers:

- :mod:`roistream.roidet` finds Regions of Interest in each camera segment.
- :mod:`roistream.utility` predicts detection accuracy from content features
  and the encoding configuration.
- :mod:`roistream.alloc` and :mod:`roistream.elastic` pick a configuration per
  camera for every time slot.
- :mod:`roistream.sim` replays bandwidth traces and scenarios through the
  full loop.

The command line lives in :mod:`roistream.cli`.
"""
