"""Latent-diffusion math, condition encoder, condition modulation and injection."""
from .condmod import CondModParams, cond_mod, cond_mod_grad_noise, init_condmod, project_text
from .denoiser import OracleDenoiser, ToyUNet, ToyUNetParams, init_toy_unet, timestep_embedding
from .encoder import (
    RESOLUTIONS,
    ScaleEncoder,
    ScaleEncoderParams,
    encode_conditions,
    init_scale_encoder,
    scale_align,
    scale_embed,
)
from .injection import condition_tensor, init_condmods, injection_forward, sample_conditioned
from .schedule import (
    NoiseSchedule,
    ddim_sample,
    ddim_step,
    ddim_timesteps,
    forward_noising,
    make_schedule,
    predict_z0,
    schedule_from_betas,
)
