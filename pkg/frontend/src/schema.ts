import { z } from "zod";

/** zod mirror of the service's edit-spec schema (tests + tooling). */

export const RegionSchema: z.ZodType<unknown> = z.lazy(() =>
  z.union([
    z.object({ type: z.literal("everywhere") }),
    z.object({
      type: z.literal("sphere"),
      center: z.tuple([z.number(), z.number(), z.number()]),
      radius: z.number().positive(),
    }),
    z.object({
      type: z.literal("box"),
      lower: z.tuple([z.number(), z.number(), z.number()]),
      upper: z.tuple([z.number(), z.number(), z.number()]),
    }),
    z.object({
      type: z.literal("halfspace"),
      normal: z.tuple([z.number(), z.number(), z.number()]),
      offset: z.number(),
    }),
    z.object({ type: z.literal("all_of"), parts: z.array(RegionSchema) }),
    z.object({ type: z.literal("any_of"), parts: z.array(RegionSchema) }),
    z.object({ type: z.literal("not"), part: RegionSchema }),
  ]),
);

export const DisplacementSchema = z.union([
  z.object({
    kind: z.literal("vector"),
    value: z.tuple([z.number(), z.number(), z.number()]),
  }),
  z.object({ kind: z.literal("normal"), value: z.number() }),
]);

export const EditSpecSchema = z.object({
  targets: z
    .array(z.object({ region: RegionSchema, displacement: DisplacementSchema }))
    .min(1),
  fixed_region: RegionSchema.nullable().optional(),
  samples: z
    .object({
      target: z.number().int().positive(),
      fixed: z.number().int().nonnegative().optional(),
      constraint: z.number().int().positive().optional(),
    })
    .optional(),
  lambda: z.number().nonnegative(),
  splits: z.number().int().min(1),
  mode: z.enum(["split", "pursue"]).optional(),
  normal_filter: z.number().nullable().optional(),
  constraints: z.array(z.enum(["volume", "area"])).optional(),
  mask: z.union([z.literal("all"), z.literal("latent")]).optional(),
  seed: z.number().int().optional(),
});

export type EditSpec = z.infer<typeof EditSpecSchema>;
