/** Small deterministic PRNG (mulberry32): same seed, same stream, any platform. */

export type Rand = () => number;

export function mulberry32(seed: number): Rand {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Uniform draw in [-bound, bound). */
export function uniform(rand: Rand, bound: number): number {
  return (rand() * 2 - 1) * bound;
}
