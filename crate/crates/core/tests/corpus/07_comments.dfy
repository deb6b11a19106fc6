// method Fake() { }
/* block with } brace
   /* nested { */ still comment }
*/
method Real(a: int) returns (b: int)
  // requires a > 0
  ensures b == a + 1 // trailing }
{
  /* } */ b := a + 1; // {
}
