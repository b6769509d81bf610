// Visual encoding of the bias torques: a return-to-base arrow per joint.
// Length is proportional to torque magnitude, so a deactivated arm (3x
// spring multiplier server-side) naturally shows arrows three times as
// long as an active arm at the same displacement. Past the pixel cap the
// arrow stops growing and a clamp marker appears.

export const PX_PER_NM = 32;
export const ARROW_CAP_PX = 48;

export interface ArrowSpec {
  lengthPx: number;
  dir: 1 | -1; // sign of the torque: which way the spring pulls
  capped: boolean;
}

export function torqueArrow(torque: number): ArrowSpec {
  const raw = Math.abs(torque) * PX_PER_NM;
  return {
    lengthPx: Math.min(raw, ARROW_CAP_PX),
    dir: torque >= 0 ? 1 : -1,
    capped: raw > ARROW_CAP_PX,
  };
}
