/**
 * Parent-pair selection state.
 *
 * The list is kept in click order, capped at two entries. Clicking a
 * selected tile deselects it; clicking a third tile drops the oldest
 * selection so the newest two remain.
 */
export function toggleSelection(selected: readonly string[], id: string): string[] {
  if (selected.includes(id)) {
    return selected.filter((s) => s !== id);
  }
  if (selected.length < 2) {
    return [...selected, id];
  }
  return [selected[selected.length - 1], id];
}

export function submitEnabled(selected: readonly string[], inFlight: boolean): boolean {
  return selected.length === 2 && selected[0] !== selected[1] && !inFlight;
}
