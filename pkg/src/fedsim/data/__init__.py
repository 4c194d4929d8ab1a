from .corpus import (
    AugmentationPolicy,
    DatasetSource,
    LabeledImage,
    augment,
    dataset_arrays,
    fingerprint,
    generate_synthetic,
    ingest_image_folder,
    split_train_test,
)
from .images import color_jitter, hflip, resize_to, rotate, vflip
from .partition import Partition, partition_by_source, partition_iid

__all__ = [
    "AugmentationPolicy", "DatasetSource", "LabeledImage",
    "augment", "dataset_arrays", "fingerprint", "generate_synthetic",
    "ingest_image_folder", "split_train_test",
    "color_jitter", "hflip", "resize_to", "rotate", "vflip",
    "Partition", "partition_by_source", "partition_iid",
]
