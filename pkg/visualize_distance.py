#!/usr/bin/env python3
"""
Visualize a PFM distance map.

This script loads a distance map (and optionally its ground truth) and saves
a figure with the inverse distance, the ground truth and the relative error.
"""

import os
import sys
import argparse
import logging
from typing import Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from fdnet.fileio import read_pfm  # noqa: E402
from fdnet.warp import DistanceMap  # noqa: E402
from utils.file_management import get_log_path, get_visualization_path  # noqa: E402

logger = logging.getLogger('distance_visualization')


def load_distance_map(input_file: str) -> DistanceMap:
    """
    Load a distance map and log its range.

    Args:
        input_file: Path to the PFM file

    Returns:
        DistanceMap
    """
    logger.info(f"Loading distance map from {input_file}...")
    D = read_pfm(input_file)
    logger.info(f"Distance map {D.shape[1]}x{D.shape[0]}, range {D.data.min():.3f} - {D.data.max():.3f} m")
    return D


def create_visualization(pred: DistanceMap, gt: Optional[DistanceMap] = None, output_file: Optional[str] = None,
                         title: Optional[str] = None, dpi: int = 150, cap: float = 80.0,
                         description: str = "distance") -> str:
    """
    Plot inverse distance, ground truth and relative error side by side.

    Args:
        pred: Predicted distance map
        gt: Ground-truth distance map (optional)
        output_file: Path to save the figure (optional)
        title: Figure title (optional)
        dpi: DPI for the output image
        cap: Ground-truth pixels beyond this distance are left out of the error panel
        description: Filename stem when output_file is None

    Returns:
        Path to the saved visualization
    """
    panels = 1 if gt is None else 3
    fig, axes = plt.subplots(1, panels, figsize=(5 * panels, 4), squeeze=False)
    axes = axes[0]

    inv = 1.0 / pred.data
    # shared color scale for prediction and ground truth
    vmax = float(np.percentile(inv, 99))
    im = axes[0].imshow(inv, cmap='magma', vmin=0.0, vmax=vmax)
    axes[0].set_title("1 / D predicted")
    fig.colorbar(im, ax=axes[0], fraction=0.046)

    if gt is not None:
        if gt.shape != pred.shape:
            raise ValueError(f"Ground truth {gt.shape} does not match prediction {pred.shape}")
        im = axes[1].imshow(1.0 / gt.data, cmap='magma', vmin=0.0, vmax=vmax)
        axes[1].set_title("1 / D ground truth")
        fig.colorbar(im, ax=axes[1], fraction=0.046)

        valid = gt.data <= cap
        rel = np.where(valid, np.abs(pred.data - gt.data) / gt.data, np.nan)
        im = axes[2].imshow(rel, cmap='viridis', vmin=0.0, vmax=0.25)
        axes[2].set_title(f"|D - D*| / D* (cap {cap:g} m)")
        fig.colorbar(im, ax=axes[2], fraction=0.046)
        logger.info(f"Median relative error within {cap:g} m: {np.nanmedian(rel):.4f}")

    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.suptitle(title or f"Distance Visualization: {description}")

    if output_file is None:
        output_file = get_visualization_path(
            viz_type='distance',
            description=description,
            parameters={'dpi': dpi}
        )

    os.makedirs(os.path.dirname(os.path.abspath(output_file)), exist_ok=True)

    fig.savefig(output_file, dpi=dpi, bbox_inches='tight')
    plt.close(fig)
    logger.info(f"Visualization saved to {output_file}")

    return output_file


def main():
    """Main entry point."""
    parser = argparse.ArgumentParser(description="Visualize a PFM distance map")
    parser.add_argument("input", help="Path to the predicted distance PFM")
    parser.add_argument("--gt", help="Path to the ground-truth distance PFM")
    parser.add_argument("--output", help="Path to save the visualization")
    parser.add_argument("--title", help="Title for the visualization")
    parser.add_argument("--dpi", type=int, default=150, help="DPI for the output image")
    parser.add_argument("--cap", type=float, default=80.0, help="Distance cap for the error panel (meters)")

    args = parser.parse_args()

    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(get_log_path('visualization'))
        ]
    )

    try:
        pred = load_distance_map(args.input)
        gt = load_distance_map(args.gt) if args.gt else None
        output_file = create_visualization(
            pred,
            gt,
            args.output,
            args.title,
            args.dpi,
            args.cap,
            description=os.path.splitext(os.path.basename(args.input))[0]
        )

        print(f"Visualization saved to {output_file}")
        return 0

    except Exception as e:
        logger.error(f"Error visualizing distance map: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
