method MaxArray(a: seq<int>) returns (m: int)
  requires |a| > 0
  ensures forall i :: 0 <= i < |a| ==> a[i] <= m
  ensures exists i :: 0 <= i < |a| && a[i] == m
{
  m := a[0];
  var i := 1;
  while i < |a|
    invariant 1 <= i <= |a|
    invariant forall j :: 0 <= j < i ==> a[j] <= m
    invariant exists j :: 0 <= j < i && a[j] == m
  {
    if a[i] > m { m := a[i]; }
    i := i + 1;
  }
}
