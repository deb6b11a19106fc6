method Search(a: array<int>, key: int) returns (idx: int)
  ensures 0 <= idx ==> idx < a.Length && a[idx] == key
  ensures idx < 0 ==> forall k :: 0 <= k < a.Length ==> a[k] != key
  ensures var n := a.Length; n >= 0
{
  idx := 0;
  while idx < a.Length
    invariant 0 <= idx <= a.Length
    invariant forall k :: 0 <= k < idx ==> a[k] != key
  {
    if a[idx] == key { return; }
    idx := idx + 1;
  }
  idx := -1;
}
