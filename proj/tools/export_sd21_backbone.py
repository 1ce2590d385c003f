"""Export a Stable Diffusion 2.1 checkpoint as a TorchScript backbone for
drift (torchscript backend).

Requires diffusers and transformers. The text encoder is not scriptable, so
prompts are embedded at export time: pass every class name / caption the runs
will use with --prompts (one per line). The empty prompt is always included.

usage:
  python tools/export_sd21_backbone.py --model stabilityai/stable-diffusion-2-1 \
      --size 768 --prompts prompts.txt --out sd21_backbone.pt
"""

import argparse
import pathlib
from typing import Dict, List, Tuple

import torch

DEFAULT_LAYER = "up_blocks.3.attentions.0.transformer_blocks.0.attn1"


def resolve(root: torch.nn.Module, path: str) -> torch.nn.Module:
    module = root
    for part in path.split("."):
        module = module[int(part)] if part.isdigit() else getattr(module, part)
    return module


class Capture(torch.nn.Module):
    """UNet pass that returns the hooked layers' projected queries, keys and
    input features alongside the noise prediction."""

    def __init__(self, unet, layers: List[str]):
        super().__init__()
        self.unet = unet
        self.attn = [resolve(unet, l) for l in layers]
        self.store: Dict[str, List[torch.Tensor]] = {}
        for i, attn in enumerate(self.attn):
            attn.to_q.register_forward_hook(self._keep(f"q{i}"))
            attn.to_k.register_forward_hook(self._keep(f"k{i}"))
            attn.register_forward_pre_hook(self._keep_input(f"x{i}"))

    def _keep(self, key):
        def hook(_module, _inputs, output):
            self.store[key] = output
        return hook

    def _keep_input(self, key):
        def hook(_module, inputs):
            self.store[key] = inputs[0]
        return hook

    def forward(self, latent, timestep, prompt) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        self.store = {}
        eps = self.unet(latent, timestep, encoder_hidden_states=prompt).sample
        qs, ks = [], []
        for i, attn in enumerate(self.attn):
            heads = attn.heads
            q = self.store[f"q{i}"][0]  # [N, heads * d]
            k = self.store[f"k{i}"][0]
            n = q.shape[0]
            qs.append(q.reshape(n, heads, -1).permute(1, 0, 2))
            ks.append(k.reshape(n, heads, -1).permute(1, 0, 2))
        return eps, torch.cat(qs), torch.cat(ks), self.store["x0"][0]


class Backbone(torch.nn.Module):
    def __init__(self, capture, encoder, decoder, vocab, meta, layers, alphas, scaling):
        super().__init__()
        self.capture = capture
        self.encoder = encoder
        self.decoder = decoder
        self.vocab: Dict[str, torch.Tensor] = vocab
        self.meta_values: Dict[str, int] = meta
        self.layers: List[str] = layers
        self.register_buffer("schedule", alphas)
        self.scaling = scaling

    @torch.jit.export
    def meta(self) -> Dict[str, int]:
        return self.meta_values

    @torch.jit.export
    def layer_names(self) -> List[str]:
        return self.layers

    @torch.jit.export
    def alphas_cumprod(self) -> torch.Tensor:
        return self.schedule

    def _device(self) -> torch.device:
        return self.schedule.device

    @torch.jit.export
    def encode_frame(self, image: torch.Tensor) -> torch.Tensor:
        x = image.to(self._device()) * 2.0 - 1.0
        return (self.encoder(x) * self.scaling).float().cpu()

    @torch.jit.export
    def decode_latent(self, latent: torch.Tensor) -> torch.Tensor:
        x = self.decoder(latent.to(self._device()) / self.scaling)
        return ((x + 1.0) / 2.0).clamp(0.0, 1.0).float().cpu()

    @torch.jit.export
    def encode_prompt(self, text: str) -> torch.Tensor:
        if text not in self.vocab:
            raise RuntimeError("prompt not in the exported vocabulary: " + text)
        return self.vocab[text]

    def _run(self, latent: torch.Tensor, timestep: int, prompt: torch.Tensor):
        t = torch.tensor([timestep], dtype=torch.long, device=self._device())
        return self.capture(latent.to(self._device()), t, prompt.to(self._device()))

    @torch.jit.export
    def predict_noise(self, latent: torch.Tensor, timestep: int, prompt: torch.Tensor) -> torch.Tensor:
        return self._run(latent, timestep, prompt)[0].float().cpu()

    @torch.jit.export
    def qk(self, latent: torch.Tensor, timestep: int, prompt: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        out = self._run(latent, timestep, prompt)
        return out[1].float().cpu(), out[2].float().cpu()

    @torch.jit.export
    def features(self, latent: torch.Tensor, timestep: int) -> torch.Tensor:
        prompt = self.vocab[""]
        return self._run(latent, timestep, prompt)[3].float().cpu()

    def forward(self, latent: torch.Tensor) -> torch.Tensor:
        return latent


def main() -> None:
    from diffusers import AutoencoderKL, DDIMScheduler, UNet2DConditionModel
    from transformers import CLIPTextModel, CLIPTokenizer

    parser = argparse.ArgumentParser()
    parser.add_argument("--model", required=True, help="diffusers model id or local directory")
    parser.add_argument("--size", type=int, default=768, help="frame side the backbone is traced for")
    parser.add_argument("--layers", nargs="+", default=[DEFAULT_LAYER])
    parser.add_argument("--prompts", type=pathlib.Path, help="file with one prompt per line")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--out", type=pathlib.Path, required=True)
    args = parser.parse_args()

    device = torch.device(args.device)
    unet = UNet2DConditionModel.from_pretrained(args.model, subfolder="unet").to(device).eval()
    vae = AutoencoderKL.from_pretrained(args.model, subfolder="vae").to(device).eval()
    tokenizer = CLIPTokenizer.from_pretrained(args.model, subfolder="tokenizer")
    text_encoder = CLIPTextModel.from_pretrained(args.model, subfolder="text_encoder").to(device).eval()
    scheduler = DDIMScheduler.from_pretrained(args.model, subfolder="scheduler")
    for p in [*unet.parameters(), *vae.parameters(), *text_encoder.parameters()]:
        p.requires_grad_(False)

    texts = [""]
    if args.prompts:
        texts += [l.strip() for l in args.prompts.read_text().splitlines() if l.strip()]
    vocab: Dict[str, torch.Tensor] = {}
    with torch.no_grad():
        for text in dict.fromkeys(texts):
            ids = tokenizer(text, padding="max_length", max_length=tokenizer.model_max_length,
                            truncation=True, return_tensors="pt").input_ids.to(device)
            vocab[text] = text_encoder(ids)[0].float().cpu()

    latent_side = args.size // 8
    latent = torch.randn(1, unet.config.in_channels, latent_side, latent_side, device=device)
    image = torch.rand(1, 3, args.size, args.size, device=device)
    prompt = vocab[""].to(device)
    timestep = torch.tensor([41], dtype=torch.long, device=device)

    capture = Capture(unet, args.layers)
    traced_capture = torch.jit.trace(capture, (latent, timestep, prompt), check_trace=False)

    class Encode(torch.nn.Module):
        def __init__(self, vae):
            super().__init__()
            self.vae = vae

        def forward(self, x):
            return self.vae.encode(x).latent_dist.mean

    class Decode(torch.nn.Module):
        def __init__(self, vae):
            super().__init__()
            self.vae = vae

        def forward(self, z):
            return self.vae.decode(z).sample

    with torch.no_grad():
        encoder = torch.jit.trace(Encode(vae), (image * 2 - 1,), check_trace=False)
        decoder = torch.jit.trace(Decode(vae), (latent,), check_trace=False)
        _, q, _, x = capture(latent, timestep, prompt)

    attn = resolve(unet, args.layers[0])
    meta = {
        "latent_height": latent_side,
        "latent_width": latent_side,
        "latent_channels": int(unet.config.in_channels),
        "input_height": args.size,
        "input_width": args.size,
        "heads_per_layer": int(attn.heads),
        "head_dim": int(q.shape[-1]),
        "token_count": int(prompt.shape[1]),
        "embedding_dim": int(prompt.shape[2]),
        "feature_dim": int(x.shape[-1]),
    }
    alphas = scheduler.alphas_cumprod.to(torch.float64).to(device)
    backbone = Backbone(traced_capture, encoder, decoder, vocab, meta, list(args.layers), alphas,
                        float(vae.config.scaling_factor))
    torch.jit.script(backbone).save(str(args.out))
    print(f"wrote {args.out}: {meta}, {len(vocab)} prompts")


if __name__ == "__main__":
    main()
