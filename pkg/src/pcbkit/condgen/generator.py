"""Bundle the edge, depth and text branches into one condition set per image."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..config import Config
from ..defects import DefectInstance
from .depth import BlurDepthStub, DepthProvider
from .edges import EdgeConfig, adaptive_canny
from .embed import text_embed_stub
from .image import check_gray
from .prompts import TemplateLibrary, build_prompt


@dataclass
class ConditionSet:
    edge: np.ndarray            # (H, W) uint8, values in {0, 255}
    depth: np.ndarray           # (1, 1, H, W) float64 in [0, 1]
    prompt: str
    text_embedding: np.ndarray  # (dim,) unit norm

    def condition_map(self) -> np.ndarray:
        """(1, 2, H, W) float map: edges scaled to [0, 1], then depth."""
        return np.concatenate([(self.edge / 255.0)[None, None], self.depth], axis=1)


def edge_config_from(cfg: Config) -> EdgeConfig:
    return EdgeConfig(cfg.low_factor, cfg.high_factor, cfg.gaussian_sigma, cfg.gaussian_radius)


def image_condition_map(img, cfg: Config | None = None, depth: DepthProvider | None = None) -> np.ndarray:
    """(1, 2, H, W) edge and depth map of one image; needs no defect annotations."""
    cfg = cfg or Config()
    img = check_gray(img)
    depth = depth or BlurDepthStub(cfg.depth_sigma)
    edge = adaptive_canny(img, edge_config_from(cfg))
    return ConditionSet(edge, np.asarray(depth(img), dtype=np.float64), "", np.zeros(0)).condition_map()


def generate_conditions(img, instances: Sequence[DefectInstance], cfg: Config | None = None,
                        depth: DepthProvider | None = None, templates: TemplateLibrary | None = None,
                        *, parallel: bool = False) -> ConditionSet:
    """Run the three branches on one image.

    The branches only read their inputs, so ``parallel=True`` runs them on a
    thread pool and returns the same result as sequential execution.
    """
    cfg = cfg or Config()
    img = check_gray(img)
    depth = depth or BlurDepthStub(cfg.depth_sigma)
    h, w = img.shape

    def edge_branch():
        return adaptive_canny(img, edge_config_from(cfg))

    def depth_branch():
        return np.asarray(depth(img), dtype=np.float64)

    def text_branch():
        prompt = build_prompt(instances, (w, h), cfg.count_threshold, templates,
                              scale_thresholds=(cfg.scale_t1, cfg.scale_t2),
                              spread_threshold=cfg.spread_threshold)
        return prompt, text_embed_stub(prompt, cfg.embed_dim, cfg.seed)

    if parallel:
        with ThreadPoolExecutor(max_workers=3) as pool:
            futures = [pool.submit(f) for f in (edge_branch, depth_branch, text_branch)]
            edge, dmap, (prompt, emb) = (f.result() for f in futures)
    else:
        edge, dmap, (prompt, emb) = edge_branch(), depth_branch(), text_branch()
    return ConditionSet(edge, dmap, prompt, emb)


def _as_image_stack(X):
    if isinstance(X, np.ndarray) and X.ndim == 2:
        return [check_gray(X)], True
    return [check_gray(x) for x in X], False


class EdgeMapTransformer(TransformerMixin, BaseEstimator):
    """Otsu-adaptive Canny as a stateless transformer over images."""

    def __init__(self, low_factor=0.5, high_factor=1.5, sigma=1.0, radius=2):
        self.low_factor = low_factor
        self.high_factor = high_factor
        self.sigma = sigma
        self.radius = radius

    def fit(self, X, y=None):
        self.edge_config_ = EdgeConfig(self.low_factor, self.high_factor, self.sigma, self.radius)
        return self

    def transform(self, X):
        check_is_fitted(self, "edge_config_")
        imgs, single = _as_image_stack(X)
        edges = [adaptive_canny(im, self.edge_config_) for im in imgs]
        return edges[0] if single else np.stack(edges)


class DepthStubTransformer(TransformerMixin, BaseEstimator):
    def __init__(self, sigma=2.0):
        self.sigma = sigma

    def fit(self, X, y=None):
        self.provider_ = BlurDepthStub(self.sigma)
        return self

    def transform(self, X):
        check_is_fitted(self, "provider_")
        imgs, single = _as_image_stack(X)
        maps = [self.provider_(im)[0, 0] for im in imgs]
        return maps[0] if single else np.stack(maps)


class PromptBuilder(TransformerMixin, BaseEstimator):
    """Maps lists of defect instances to prompt strings for a fixed image size."""

    def __init__(self, image_size=(64, 64), count_threshold=6, spread_threshold=5,
                 scale_t1=32.0 ** 2, scale_t2=96.0 ** 2, templates=None):
        self.image_size = image_size
        self.count_threshold = count_threshold
        self.spread_threshold = spread_threshold
        self.scale_t1 = scale_t1
        self.scale_t2 = scale_t2
        self.templates = templates

    def fit(self, X, y=None):
        self.templates_ = self.templates or TemplateLibrary.default()
        return self

    def transform(self, X):
        check_is_fitted(self, "templates_")
        return [build_prompt(inst, self.image_size, self.count_threshold, self.templates_,
                             scale_thresholds=(self.scale_t1, self.scale_t2),
                             spread_threshold=self.spread_threshold)
                for inst in X]


class ConditionGenerator(BaseEstimator):
    """Estimator-style wrapper around :func:`generate_conditions`.

    ``transform`` takes ``(image, instances)`` pairs and returns one
    :class:`ConditionSet` per pair.
    """

    def __init__(self, config=None, depth_provider=None, templates=None, parallel=False):
        self.config = config
        self.depth_provider = depth_provider
        self.templates = templates
        self.parallel = parallel

    def fit(self, X=None, y=None):
        self.config_ = self.config or Config()
        self.depth_provider_ = self.depth_provider or BlurDepthStub(self.config_.depth_sigma)
        self.templates_ = self.templates or TemplateLibrary.default()
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        return [generate_conditions(img, inst, self.config_, self.depth_provider_, self.templates_,
                                    parallel=self.parallel)
                for img, inst in X]

    def fit_transform(self, X, y=None):
        return self.fit(X, y).transform(X)
