from roistream.enums import TraceProfile, WeightPreset

#: Bitrate options in kbps.
DEFAULT_BITRATES = (50, 100, 200, 400, 800, 1000)

#: Resolution options as ordinal indices, lowest first.
DEFAULT_RESOLUTIONS = (0, 1, 2)

#: Slot length in seconds.
DEFAULT_SLOT_LENGTH = 1.0

#: Frames captured per slot.
DEFAULT_FRAMES_PER_SLOT = 10

#: Smallest raster side that ROI detection accepts.
MIN_FRAME_SIDE = 16

#: Lower clip for generated bandwidth samples, in kbps.
MIN_TRACE_KBPS = 50.0

#: Target (mean, std) in kbps for each synthetic bandwidth condition.
TRACE_MOMENTS = {
    TraceProfile.LOW: (521.0, 230.0),
    TraceProfile.MEDIUM: (1134.0, 499.0),
    TraceProfile.HIGH: (2305.0, 1397.0),
}

#: Camera weights for each preset. `uniform` is expanded to any camera count.
WEIGHT_PRESETS = {
    WeightPreset.UNIFORM: (1.0, 1.0, 1.0, 1.0, 1.0),
    WeightPreset.SET2: (0.84, 0.38, 1.92, 0.74, 0.45),
    WeightPreset.SET3: (1.45, 1.31, 0.60, 0.86, 1.46),
}

#: Version tag written into utility model files.
MODEL_FORMAT_VERSION = 1
