from .bundle import (
    CHECKPOINT_MAGIC,
    ColorNet,
    FeatureNet,
    FieldBundle,
    FieldConfig,
    Linear,
    SDFNet,
    load_checkpoint,
    save_checkpoint,
)
from .encoding import PositionalEncoding
