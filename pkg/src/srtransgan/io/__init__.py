from .checkpoint import Checkpoint, crc64, load_checkpoint, save_checkpoint
from .dataset import DatasetManifest, ImagePair, crop_pair, load_dataset, make_pair
from .images import load_image, load_pgm, save_image, save_pgm16
from .resample import bicubic_resize, cubic_kernel, downscale, upscale

__all__ = [
    "Checkpoint",
    "DatasetManifest",
    "ImagePair",
    "bicubic_resize",
    "crc64",
    "crop_pair",
    "cubic_kernel",
    "downscale",
    "load_checkpoint",
    "load_dataset",
    "load_image",
    "load_pgm",
    "make_pair",
    "save_checkpoint",
    "save_image",
    "save_pgm16",
    "upscale",
]
