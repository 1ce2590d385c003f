"""Export a Segment Anything checkpoint as a TorchScript segmenter for drift
(torchscript segmenter).

Requires the segment_anything package. The prompt decoder is traced once per
point count; pass every count the runs will use with --points.

usage:
  python tools/export_sam.py --checkpoint sam_vit_h_4b8939.pth --model vit_h \
      --points 1 2 3 5 --out sam_vit_h.pt
"""

import argparse
import pathlib
from typing import List, Tuple

import torch
import torch.nn.functional as F


class Encoder(torch.nn.Module):
    def __init__(self, sam):
        super().__init__()
        self.image_encoder = sam.image_encoder

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.image_encoder(x)


class Decoder(torch.nn.Module):
    def __init__(self, sam):
        super().__init__()
        self.prompt_encoder = sam.prompt_encoder
        self.mask_decoder = sam.mask_decoder

    def forward(self, embedding, coords, labels) -> Tuple[torch.Tensor, torch.Tensor]:
        sparse, dense = self.prompt_encoder(points=(coords, labels), boxes=None, masks=None)
        return self.mask_decoder(
            image_embeddings=embedding,
            image_pe=self.prompt_encoder.get_dense_pe(),
            sparse_prompt_embeddings=sparse,
            dense_prompt_embeddings=dense,
            multimask_output=True,
        )


class Segmenter(torch.nn.Module):
    def __init__(self, encoder, decoders, counts: List[int], mean, std, side: int):
        super().__init__()
        self.encoder = encoder
        self.decoders = torch.nn.ModuleList(decoders)
        self.counts: List[int] = counts
        self.register_buffer("mean", mean.view(1, 3, 1, 1))
        self.register_buffer("std", std.view(1, 3, 1, 1))
        self.side = side

    @torch.jit.export
    def embed(self, image: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        h = image.shape[2]
        w = image.shape[3]
        scale = float(self.side) / float(max(h, w))
        rh = int(h * scale + 0.5)
        rw = int(w * scale + 0.5)
        x = F.interpolate(image.to(self.mean.device) * 255.0, size=[rh, rw], mode="bilinear", align_corners=False)
        x = (x - self.mean) / self.std
        x = F.pad(x, [0, self.side - rw, 0, self.side - rh])
        sizes = torch.tensor([h, w, rh, rw], dtype=torch.long)
        return self.encoder(x), sizes

    @torch.jit.export
    def segment(self, embedding: Tuple[torch.Tensor, torch.Tensor], coords: torch.Tensor,
                labels: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        features, sizes = embedding
        h = int(sizes[0])
        w = int(sizes[1])
        rh = int(sizes[2])
        rw = int(sizes[3])
        scaled = coords.to(features.device) * torch.tensor([float(rw) / w, float(rh) / h], device=features.device)
        count = coords.shape[1]
        for i, decoder in enumerate(self.decoders):
            if self.counts[i] == count:
                low, scores = decoder(features, scaled, labels.to(features.device).int())
                masks = F.interpolate(low, size=[self.side, self.side], mode="bilinear", align_corners=False)
                masks = masks[:, :, :rh, :rw]
                masks = F.interpolate(masks, size=[h, w], mode="bilinear", align_corners=False)
                return masks.float().cpu(), scores.float().cpu()
        raise RuntimeError("no decoder exported for this point count")

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return image


def main() -> None:
    from segment_anything import sam_model_registry

    parser = argparse.ArgumentParser()
    parser.add_argument("--checkpoint", type=pathlib.Path, required=True)
    parser.add_argument("--model", default="vit_h")
    parser.add_argument("--points", type=int, nargs="+", default=[1, 2, 3, 5])
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--out", type=pathlib.Path, required=True)
    args = parser.parse_args()

    device = torch.device(args.device)
    sam = sam_model_registry[args.model](checkpoint=str(args.checkpoint)).to(device).eval()
    side = sam.image_encoder.img_size
    with torch.no_grad():
        encoder = torch.jit.trace(Encoder(sam), (torch.zeros(1, 3, side, side, device=device),), check_trace=False)
        embedding = encoder(torch.zeros(1, 3, side, side, device=device))
        decoders = []
        for n in args.points:
            coords = torch.rand(1, n, 2, device=device) * side
            labels = torch.ones(1, n, dtype=torch.int, device=device)
            decoders.append(torch.jit.trace(Decoder(sam), (embedding, coords, labels), check_trace=False))
    segmenter = Segmenter(encoder, decoders, list(args.points), sam.pixel_mean.detach().clone(),
                          sam.pixel_std.detach().clone(), side)
    torch.jit.script(segmenter).save(str(args.out))
    print(f"wrote {args.out}: point counts {args.points}")


if __name__ == "__main__":
    main()
