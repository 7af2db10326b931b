from unlearnkit.data.cifar import encode_cifar10, load_cifar10
from unlearnkit.data.dataset import (
    AccessLog,
    Dataset,
    ForgetPartition,
    ForgetSpec,
    batch_iter,
    partition_forget,
)
from unlearnkit.data.idx import load_idx, load_mnist, write_idx
from unlearnkit.data.synth import synth_blobs

__all__ = [
    "AccessLog",
    "Dataset",
    "ForgetPartition",
    "ForgetSpec",
    "batch_iter",
    "encode_cifar10",
    "load_cifar10",
    "load_idx",
    "load_mnist",
    "partition_forget",
    "synth_blobs",
    "write_idx",
]
