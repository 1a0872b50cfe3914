# app/tools/patterns_taxonomy.py
# -*- coding: utf-8 -*-

# Дерево: unfused / fused -> спосіб перекриття. implemented=False -- визнані, але не реалізовані листки.
TAXONOMY = [
    {"id": "baseline_allgather", "name": "Базова лінія (GEMM + all-gather)", "fused": False, "overlap": False, "implemented": True,
     "desc": "Локальний GEMM усієї смуги, потім all-gather шардів з боку хоста."},
    {"id": "bulk_sync",          "name": "Unfused: bulk-synchronous",        "fused": False, "overlap": False, "implemented": True,
     "desc": "Ядро GEMM, бар'єр, ядро all-scatter на тому ж потоці; перекриття немає."},
    {"id": "producer_consumer",  "name": "Unfused: producer-consumer",       "fused": False, "overlap": True,  "implemented": True,
     "desc": "Два ядра на різних потоках з жорстким поділом слотів, синхронізація прапорцями тайлів."},
    {"id": "fused_sequential",   "name": "Fused: sequential",                "fused": True,  "overlap": True,  "implemented": True,
     "desc": "Одне ядро: кожен тайл одразу після обчислення пишеться на всі ранги."},
    {"id": "wg_specialized",     "name": "Fused: workgroup specialization",  "fused": True,  "overlap": True,  "implemented": True,
     "desc": "Одне ядро: перші pid рахують і публікують тайли, решта чекають прапорці і розсилають."},
    {"id": "wave_specialized",   "name": "Fused: wave specialization",       "fused": True,  "overlap": True,  "implemented": False,
     "desc": "Поділ ролей усередині workgroup між хвилями (warp-ами)."},
    {"id": "work_queue",         "name": "Fused: work queue",                "fused": True,  "overlap": True,  "implemented": False,
     "desc": "Динамічна черга задач обчислення та комунікації замість статичного поділу."},
]

LABELS  = [x["id"] for x in TAXONOMY if x["implemented"]]
ID2NAME = {x["id"]: x["name"] for x in TAXONOMY}
ID2DESC = {x["id"]: x["desc"] for x in TAXONOMY}
# Порівнювані патерни (без базової лінії)
OVERLAP_STUDY = ["bulk_sync", "producer_consumer", "fused_sequential", "wg_specialized"]
