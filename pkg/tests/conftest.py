# tests/conftest.py
# -*- coding: utf-8 -*-
import pytest

from app.tools.runtime import init, shutdown
from app.tools.symheap import init_heap

MIB = 1 << 20


@pytest.fixture
def make_world():
    """Фабрика світів; усі створені світи гасяться після тесту."""
    created = []

    def factory(world_size: int = 2, arena_size: int = 4 * MIB, num_cu: int = 4, **kwargs):
        contexts = init(world_size, arena_size, num_cu, **kwargs)
        created.append(contexts)
        return contexts

    yield factory
    for contexts in created:
        shutdown(contexts)


@pytest.fixture
def layout():
    return init_heap(2, 1 * MIB)
