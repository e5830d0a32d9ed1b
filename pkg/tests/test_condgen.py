import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from pcbkit.condgen import (
    BlurDepthStub,
    ConditionGenerator,
    EdgeConfig,
    TemplateLibrary,
    adaptive_canny,
    build_prompt,
    classify_scale,
    generate_conditions,
    hysteresis_thresholds,
    locate_cell,
    otsu_threshold,
    read_gray,
    text_embed_stub,
)
from pcbkit.condgen.generator import EdgeMapTransformer, PromptBuilder
from pcbkit.defects import DefectInstance
from pcbkit.exceptions import ValidationError
from pcbkit.tensor import load_tensor


def step_image(n=64):
    img = np.zeros((n, n), np.uint8)
    img[:, n // 2:] = 255
    return img


# otsu ---------------------------------------------------------------------

def test_otsu_two_level_tie_goes_low():
    img = np.full((8, 8), 10, np.uint8)
    img[4:] = 200
    assert otsu_threshold(img) == 10


@pytest.mark.parametrize("v", [0, 77, 255])
def test_otsu_constant_image(v):
    assert otsu_threshold(np.full((5, 5), v, np.uint8)) == v


def test_otsu_matches_exhaustive_random(rng):
    for _ in range(30):
        img = rng.integers(0, 256, (8, 8)).astype(np.uint8)
        assert otsu_threshold(img) == oracles.otsu(img)


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, (6, 6), elements=st.integers(0, 255)))
def test_otsu_property(img):
    assert otsu_threshold(img) == oracles.otsu(img)


# canny --------------------------------------------------------------------

def test_hysteresis_thresholds_from_factors():
    assert hysteresis_thresholds(100, EdgeConfig(0.5, 1.5)) == (50, 150)


def test_canny_constant_image_is_empty():
    assert not adaptive_canny(np.full((32, 32), 90, np.uint8)).any()


@pytest.mark.parametrize("transpose", [False, True])
def test_canny_step_gives_single_line(transpose):
    img = step_image()
    edges = adaptive_canny(img.T if transpose else img)
    if transpose:
        edges = edges.T
    cols = np.nonzero(edges.any(axis=0))[0]
    assert len(cols) == 1
    assert edges[:, cols[0]].all()
    assert set(np.unique(edges)) <= {0, 255}


def test_canny_binary_output_on_random(rng):
    edges = adaptive_canny(rng.integers(0, 256, (20, 24)).astype(np.uint8))
    assert edges.dtype == np.uint8 and set(np.unique(edges)) <= {0, 255}


# prompts ------------------------------------------------------------------

@pytest.mark.parametrize("area,want", [(100, "small"), (1023, "small"), (1024, "medium"),
                                       (9216, "medium"), (10000, "large")])
def test_classify_scale(area, want):
    assert classify_scale((0, 0, area, 1)) == want


@pytest.mark.parametrize("c,want", [((0.5, 0.5), "center"), ((0.1, 0.9), "bottom-left"),
                                    ((1.0, 0.0), "top-right"), ((0.0, 0.5), "left")])
def test_locate_cell(c, want):
    assert locate_cell(*c) == want


def test_locate_cell_out_of_range():
    with pytest.raises(ValidationError):
        locate_cell(1.2, 0.5)


def test_prompt_single_defect():
    insts = [DefectInstance("short", (295, 295, 10, 10))]
    assert build_prompt(insts, (600, 600)) == "a PCB image with 1 small short defect at the center"


def test_prompt_two_defects_keep_input_order():
    insts = [DefectInstance("open", (10, 10, 40, 40)), DefectInstance("spur", (560, 560, 10, 10))]
    want = "a PCB image with 1 medium open defect at the top-left, 1 small spur defect at the bottom-right"
    assert build_prompt(insts, (600, 600)) == want
    assert build_prompt(insts[::-1], (600, 600)) != want


def _cell_box(col, row, k, size=600):
    cell = size / 3
    return (int(col * cell + 10 + 3 * k), int(row * cell + 10 + 3 * k), 8, 8)


def test_prompt_region_scattered():
    cells = list(itertools.product(range(3), range(3)))[:7]
    insts = [DefectInstance("mouse_bite", _cell_box(*cells[i % 7], i // 7)) for i in range(12)]
    p = build_prompt(insts, (600, 600), count_threshold=6, spread_threshold=5)
    assert "12 mouse bite defects" in p and "scattered" in p


def test_prompt_region_clustered():
    insts = [DefectInstance("short", _cell_box(0, 0, i)) for i in range(8)]
    p = build_prompt(insts, (600, 600), count_threshold=6)
    assert "clustered" in p and "top-left" in p and "scattered" not in p


def test_prompt_empty_raises():
    with pytest.raises(ValidationError):
        build_prompt([], (64, 64))


def test_custom_templates():
    lib = TemplateLibrary.parse("prefix: PCB:\ninstance: {category}/{scale}/{location}\n"
                                "region: {quantity}x{category}\nscattered: spread\nclustered: near {location}\n")
    p = build_prompt([DefectInstance("spur", (0, 0, 4, 4))], (64, 64), templates=lib)
    assert p == "PCB: spur/small/top-left"


# text and depth -----------------------------------------------------------

def test_text_embedding_deterministic_and_distinct():
    a = text_embed_stub("a PCB image with 1 small short defect at the center")
    assert np.array_equal(a, text_embed_stub("a PCB image with 1 small short defect at the center"))
    assert abs(np.linalg.norm(a) - 1) < 1e-9
    vecs = np.stack([text_embed_stub(f"prompt {i}") for i in range(100)])
    cos = vecs @ vecs.T
    np.fill_diagonal(cos, 0)
    assert np.abs(cos).max() < 1 - 1e-6


def test_depth_stub_range_and_constant():
    d = BlurDepthStub()(np.arange(64, dtype=np.uint8).reshape(8, 8))
    assert d.shape == (1, 1, 8, 8) and d.min() >= 0 and d.max() <= 1
    assert np.all(BlurDepthStub()(np.full((4, 4), 9, np.uint8)) == 1)


# full condition set -------------------------------------------------------

def test_constant_image_conditions():
    cs = generate_conditions(np.full((32, 32), 50, np.uint8), [DefectInstance("open", (3, 3, 4, 4))])
    assert not cs.edge.any() and cs.prompt and 0 <= cs.depth.min() <= cs.depth.max() <= 1


def test_golden_condition_set(data_dir):
    img = read_gray(data_dir / "golden_input.png")
    recs = [json.loads(l) for l in (data_dir / "golden_instances.jsonl").read_text().splitlines()]
    insts = [DefectInstance(r["class"], tuple(r["bbox"])) for r in recs]
    cs = generate_conditions(img, insts)
    assert np.array_equal(cs.edge, read_gray(data_dir / "golden_edge.png"))
    assert np.abs(cs.depth - load_tensor(data_dir / "golden_depth.txt")).max() < 1e-12
    assert cs.prompt == (data_dir / "golden_prompt.txt").read_text().strip()
    assert cs.condition_map().shape == (1, 2, 64, 64)


def test_parallel_branches_match_sequential(data_dir):
    img = read_gray(data_dir / "golden_input.png")
    insts = [DefectInstance("short", (5, 5, 6, 6))]
    a, b = generate_conditions(img, insts), generate_conditions(img, insts, parallel=True)
    assert np.array_equal(a.edge, b.edge) and np.array_equal(a.depth, b.depth) and a.prompt == b.prompt


def test_estimators(data_dir):
    img = read_gray(data_dir / "golden_input.png")
    edge = EdgeMapTransformer().fit(img).transform(img)
    assert np.array_equal(np.squeeze(edge), adaptive_canny(img))
    assert EdgeMapTransformer(low_factor=0.3).get_params()["low_factor"] == 0.3
    prompts = PromptBuilder(image_size=(600, 600)).fit_transform([[DefectInstance("short", (295, 295, 10, 10))]])
    assert list(prompts) == ["a PCB image with 1 small short defect at the center"]
    gen = ConditionGenerator().fit()
    out = gen.transform([(img, [DefectInstance("spur", (1, 1, 3, 3))])])
    assert out[0].edge.shape == img.shape


def test_image_condition_map_matches_full_set(data_dir):
    from pcbkit.condgen import generate_conditions, image_condition_map, read_gray
    from pcbkit.defects import instances_for_image, read_records
    img = read_gray(data_dir / "golden_input.png")
    insts = instances_for_image(read_records(data_dir / "golden_instances.jsonl"), "golden")
    full = generate_conditions(img, insts).condition_map()
    assert np.array_equal(image_condition_map(img), full)
