"""带标签的子种子派生：每个随机消费者拥有独立的随机流"""

import zlib

import numpy as np

INSTANCE_GEN = "instance-gen"
GAUSSIAN_DIRECTION = "gaussian-direction"
MONTE_CARLO = "mc"


def derive_rng(seed: int, label: str) -> np.random.Generator:
    """
    由运行种子与固定标签派生随机数生成器。

    开启或关闭某个消费者不会改变其他消费者的随机流。
    """
    key = zlib.crc32(label.encode("utf-8"))
    sequence = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(key,))
    return np.random.default_rng(sequence)
